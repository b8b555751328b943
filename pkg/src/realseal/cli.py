"""``realseal`` command-line entry point.

Every command accepts ``--format human|machine``; machine output is the
canonical key=value grammar. ``verify`` exits 0 Verified, 2 Malformed,
3 UntrustedSigner, 4 Tampered, 5 RevokedSigner, 64 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

from realseal import grammar
from realseal.container import (
    Verdict,
    read_container,
    real_name,
    unwrap,
    verify_container,
    write_container,
)
from realseal.crypto import (
    ProvenanceManifest,
    SceneLabel,
    content_hash,
    dump_key,
    generate_keypair,
    read_private_key,
    read_public_key,
    sign_manifest,
    write_keypair,
)
from realseal.errors import RealsealError

log = logging.getLogger("realseal")

EX_USAGE = 64
VERDICT_EXIT = {
    Verdict.VERIFIED: 0,
    Verdict.MALFORMED: 2,
    Verdict.UNTRUSTED_SIGNER: 3,
    Verdict.TAMPERED: 4,
    Verdict.REVOKED_SIGNER: 5,
}


class UsageError(RealsealError):
    exit_code = EX_USAGE


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def emit(fields: dict, fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "machine":
        out.write(grammar.dumps({k: v for k, v in fields.items()}).decode("utf-8"))
        return
    width = max((len(k) for k in fields), default=0)
    for key, value in fields.items():
        out.write(f"{key:<{width}}  {value}\n")


# -- trust sources -------------------------------------------------------------------

def _ca_pubkey(args) -> bytes:
    path = args.ca_pubkey or os.environ.get("REALSEAL_CA_PUBKEY")
    if not path:
        raise UsageError("a CA root public key is required (--ca-pubkey or REALSEAL_CA_PUBKEY)")
    return read_public_key(path)


def load_trust(args):
    from realseal.client import TrustClient, load_trust_list_file

    url = getattr(args, "ca_url", None) or os.environ.get("REALSEAL_CA_URL")
    if args.trustlist:
        return load_trust_list_file(args.trustlist, _ca_pubkey(args))
    if url:
        return TrustClient(url, _ca_pubkey(args)).fetch()
    raise UsageError("no trust source: pass --trustlist FILE or --ca-url URL (or set REALSEAL_CA_URL)")


def _add_trust_flags(p):
    p.add_argument("--trustlist", help="validated trust-list file")
    p.add_argument("--ca-url", help="CA service base URL (default $REALSEAL_CA_URL)")
    p.add_argument("--ca-pubkey", help="CA root public key file (default $REALSEAL_CA_PUBKEY)")


def _ca_url(args) -> str:
    url = args.ca_url or os.environ.get("REALSEAL_CA_URL")
    if not url:
        raise UsageError("--ca-url (or REALSEAL_CA_URL) is required")
    return url


# -- commands --------------------------------------------------------------------------

def cmd_keygen(args) -> int:
    seed = bytes.fromhex(args.seed) if args.seed else None
    keypair = generate_keypair(seed)
    private_path, public_path = write_keypair(keypair, args.out)
    emit({"private_key": str(private_path), "public_key": str(public_path),
          "fingerprint": keypair.fingerprint.hex}, args.format)
    return 0


def cmd_ca_serve(args) -> int:
    from realseal.server import make_server
    from realseal.trust import TrustAuthority, load_or_create_ca_key

    token = args.admin_token or os.environ.get("REALSEAL_ADMIN_TOKEN")
    if not token:
        raise UsageError("--admin-token (or REALSEAL_ADMIN_TOKEN) is required")
    host, _, port = args.listen.rpartition(":")
    keypair = load_or_create_ca_key(args.ca_key)
    key_path = Path(args.ca_key)
    pub_path = key_path.with_name(key_path.name.removesuffix(".key") + ".pub")
    if not pub_path.exists():
        pub_path.write_text(dump_key(keypair.public_key, "public"))
    authority = TrustAuthority(keypair, token, Path(args.log_path))
    server = make_server(authority, host or "127.0.0.1", int(port))
    emit({"listening": "http://%s:%d" % server.server_address[:2],
          "ca_fingerprint": keypair.fingerprint.hex,
          "ca_pubkey": str(pub_path),
          "list_version": authority.get_trust_list().list_version}, args.format)
    sys.stdout.flush()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def cmd_ca_register(args) -> int:
    from realseal.client import TrustClient

    client = TrustClient(_ca_url(args), b"")
    fp = client.register(args.name, read_public_key(args.key))
    emit({"fingerprint": fp.hex, "status": "pending"}, args.format)
    return 0


def _admin_token(args) -> str:
    token = args.admin_token or os.environ.get("REALSEAL_ADMIN_TOKEN")
    if not token:
        raise UsageError("--admin-token (or REALSEAL_ADMIN_TOKEN) is required")
    return token


def cmd_ca_approve(args) -> int:
    from realseal.client import TrustClient
    from realseal.crypto import Fingerprint

    version = TrustClient(_ca_url(args), b"").approve(Fingerprint.from_hex(args.fingerprint),
                                                     _admin_token(args))
    emit({"list_version": version}, args.format)
    return 0


def cmd_ca_revoke(args) -> int:
    from realseal.client import TrustClient
    from realseal.crypto import Fingerprint

    version = TrustClient(_ca_url(args), b"").revoke(Fingerprint.from_hex(args.fingerprint),
                                                    _admin_token(args), args.reason)
    emit({"list_version": version}, args.format)
    return 0


def cmd_ca_fetch(args) -> int:
    from realseal.client import TrustClient

    client = TrustClient(_ca_url(args), _ca_pubkey(args))
    data = client.fetch_bytes()
    from realseal.trust import validate_trust_list

    tl = validate_trust_list(data, client.ca_root_public_key)
    Path(args.out).write_bytes(data)
    emit({"list_version": tl.list_version, "entries": len(tl.entries), "out": args.out},
         args.format)
    return 0


def cmd_sign(args) -> int:
    keypair = read_private_key(args.key)
    payload_path = Path(args.payload)
    payload = payload_path.read_bytes()
    inner = args.inner_format or payload_path.suffix.lstrip(".").lower()
    choice = args.scene_label.lower()
    if choice == "auto":
        if not args.geometry:
            raise UsageError("--scene-label auto needs --geometry with rig and correspondences")
        from realseal.geometry import classify_scene, load_geometry

        rig, corr = load_geometry(Path(args.geometry).read_bytes())
        if corr is None:
            raise UsageError("geometry file has no correspondences")
        label = classify_scene(corr, rig, args.threshold).label
    else:
        label = SceneLabel.parse(choice)
    when = datetime.now(timezone.utc).replace(microsecond=0)
    if args.capture_time:
        from realseal.crypto import parse_time

        when = parse_time(args.capture_time)
    manifest = ProvenanceManifest(keypair.fingerprint, content_hash(payload), inner, label, when,
                                  args.device_id)
    blob = write_container(payload, inner, manifest, sign_manifest(manifest, keypair.private_key))
    out = Path(args.out) if args.out else payload_path.with_name(
        real_name(payload_path.name, inner))
    if not out.name.endswith(f".{inner}.real"):
        raise UsageError(f"output name must end in .{inner}.real")
    out.write_bytes(blob)
    emit({"out": str(out), "scene_label": label.value, "content_hash": manifest.content_hash.hex,
          "signer_fingerprint": keypair.fingerprint.hex}, args.format)
    return 0


def cmd_verify(args) -> int:
    path = Path(args.path)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    trust_list = load_trust(args)
    report = verify_container(path.read_bytes(), trust_list)
    fields = {"path": str(path), **report.fields()}
    if not path.name.endswith(".real"):
        fields["warning"] = "file name lacks the .real extension"
    emit(fields, args.format)
    return VERDICT_EXIT[report.verdict]


def cmd_inspect(args) -> int:
    data = Path(args.path).read_bytes()
    c = read_container(data)
    m = c.manifest
    fields = {
        "version": c.version,
        "scene_label": c.scene_label.value,
        "inner_format": c.inner_format,
        "payload_bytes": len(c.payload),
        "manifest_bytes": len(c.manifest_bytes),
        "signature": c.signature.hex(),
    }
    fields.update({f"manifest.{k}": v for k, v in m.fields().items()})
    emit(fields, args.format)
    return 0


def cmd_unwrap(args) -> int:
    data = Path(args.path).read_bytes()
    has_trust = args.trustlist or args.ca_url or os.environ.get("REALSEAL_CA_URL")
    # forensic extraction may run without a trust source; the verdict then
    # can be at best UntrustedSigner
    trust_list = load_trust(args) if has_trust or not args.force else None
    report = verify_container(data, trust_list)
    container = read_container(data)
    out = args.out or args.path
    result = unwrap(container, out, report, override=args.force)
    fields = {"out": str(result.path), "verdict": report.verdict.value}
    if result.warning:
        fields["warning"] = result.warning
    emit(fields, args.format)
    return 0


def cmd_scan(args) -> int:
    from realseal.scan import cmd_scan as scan, generate_corpus

    root = Path(args.root)
    if args.generate:
        _, expected = generate_corpus(root, args.generate, seed=args.seed or 0)
        emit({"generated": args.generate, "root": str(root),
              "trustlist": str(root / "_trust" / "trustlist.txt"),
              "ca_pubkey": str(root / "_trust" / "ca.pub"),
              **{f"expected.{k}": v for k, v in expected.items()}}, args.format)
        return 0
    trust_list = load_trust(args) if args.mode == "full" else None
    report = scan(root, trust_list, args.mode)
    emit(report.fields(), args.format)
    return 0


def cmd_spoof_check(args) -> int:
    from realseal.geometry import classify_scene, load_geometry

    rig, corr = load_geometry(Path(args.geometry).read_bytes())
    if corr is None:
        raise UsageError("geometry file has no correspondences")
    report = classify_scene(corr, rig, args.threshold)
    emit(report.fields(), args.format)
    if args.plot:
        from realseal.plotting import plot_planarity

        plot_planarity(report, args.plot)
    return 0


def cmd_design_eval(args) -> int:
    from dataclasses import replace

    from realseal import sensing

    if args.config:
        menu, experiment, betas = sensing.load_experiment_config(Path(args.config).read_bytes())
    else:
        menu, experiment, betas = sensing.default_menu(), sensing.Experiment(), [0.0]
    if args.beta:
        betas = [float(b) for b in args.beta.split(",")]
    if args.designs:
        wanted = args.designs.split(",")
        menu = [d for d in menu if d.name in wanted]
        if not menu:
            raise UsageError(f"no designs named {wanted}")
    if args.samples:
        experiment = replace(experiment, train_scenes=args.samples, eval_scenes=args.samples)
    if args.seed is not None:
        experiment = replace(experiment, seed=args.seed)

    sweep = sensing.beta_sweep(menu, experiment, betas)
    fields: dict[str, object] = {}
    for k, (beta, chosen, reports) in enumerate(sweep):
        fields[f"sweep.{k}.beta"] = f"{beta:g}"
        fields[f"sweep.{k}.selected"] = chosen.name
        for i, r in enumerate(reports):
            fields.update(r.fields(prefix=f"sweep.{k}.design.{i}."))
    if args.format == "human":
        for beta, chosen, reports in sweep:
            print(f"beta = {beta:g}")
            print(f"  {'design':<14}{'j_real':>10}{'j_spoof':>10}{'cost_term':>11}"
                  f"{'objective':>11}{'auc':>8}")
            for r in reports:
                mark = "*" if r.design.name == chosen.name else " "
                print(f" {mark}{r.design.name:<14}{r.j_real:>10.4f}{r.j_spoof:>10.4f}"
                      f"{r.cost_term:>11.4f}{r.objective:>11.4f}{r.auc:>8.3f}")
            print(f"  selected: {chosen.name}")
    else:
        emit(fields, "machine")
    if args.plot:
        from realseal.plotting import plot_beta_sweep

        plot_beta_sweep(sweep, args.plot)
    return 0


def cmd_demo_spoof(args) -> int:
    from dataclasses import replace

    from realseal.capture import DemoConfig, run_spoof_demo

    config = DemoConfig.from_text(Path(args.config).read_bytes()) if args.config else DemoConfig()
    if args.genuine:
        config = replace(config, genuine=True)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.threshold is not None:
        config = replace(config, threshold=args.threshold)
    trust_list = None
    if args.trustlist or args.ca_url or config.trustlist_path or config.ca_url:
        if config.trustlist_path and not args.trustlist:
            args.trustlist = config.trustlist_path
        if config.ca_url and not args.ca_url:
            args.ca_url = config.ca_url
        if config.ca_pubkey_path and not args.ca_pubkey:
            args.ca_pubkey = config.ca_pubkey_path
        trust_list = load_trust(args)
    device = None
    if args.key:
        from realseal.capture import DeviceIdentity

        device = DeviceIdentity("demo-cam", read_private_key(args.key))
    report = run_spoof_demo(config, trust_list, device)
    emit(report.fields(), args.format)
    if args.plot:
        from realseal.plotting import plot_planarity

        plot_planarity(report.planarity, args.plot)
    return 0


# -- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("human", "machine"), default="human")

    parser = _Parser(prog="realseal", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keygen", parents=[common], help="generate a signing keypair")
    p.add_argument("--out", required=True, help="path prefix; writes PREFIX.key and PREFIX.pub")
    p.add_argument("--seed", help="64 hex chars for a deterministic key")
    p.set_defaults(func=cmd_keygen)

    ca = sub.add_parser("ca", help="central authority service and admin commands")
    ca_sub = ca.add_subparsers(dest="ca_command", required=True, parser_class=_Parser)
    p = ca_sub.add_parser("serve", parents=[common])
    p.add_argument("--listen", default="127.0.0.1:8080")
    p.add_argument("--admin-token")
    p.add_argument("--log-path", default="realseal-ca.log")
    p.add_argument("--ca-key", default="realseal-ca.key")
    p.set_defaults(func=cmd_ca_serve)
    p = ca_sub.add_parser("register", parents=[common])
    p.add_argument("--ca-url")
    p.add_argument("--name", required=True)
    p.add_argument("--key", required=True, help="manufacturer public key file")
    p.set_defaults(func=cmd_ca_register)
    for name, func in (("approve", cmd_ca_approve), ("revoke", cmd_ca_revoke)):
        p = ca_sub.add_parser(name, parents=[common])
        p.add_argument("--ca-url")
        p.add_argument("--fingerprint", required=True)
        p.add_argument("--admin-token")
        if name == "revoke":
            p.add_argument("--reason", default="")
        p.set_defaults(func=func)
    p = ca_sub.add_parser("fetch", parents=[common], help="download and validate the trust list")
    p.add_argument("--ca-url")
    p.add_argument("--ca-pubkey")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ca_fetch)

    p = sub.add_parser("sign", parents=[common], help="wrap a payload into a signed .real file")
    p.add_argument("--key", required=True)
    p.add_argument("--payload", required=True)
    p.add_argument("--scene-label", choices=("2d", "3d", "auto"), default="3d")
    p.add_argument("--geometry", help="rig + correspondence file for --scene-label auto")
    p.add_argument("--threshold", type=float, default=0.005)
    p.add_argument("--device-id", default="cli")
    p.add_argument("--inner-format")
    p.add_argument("--capture-time", help="YYYY-MM-DDThh:mm:ssZ (default now)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_sign)

    p = sub.add_parser("verify", parents=[common], help="verify a .real file")
    p.add_argument("path")
    _add_trust_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("inspect", parents=[common], help="print container fields")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("unwrap", parents=[common], help="extract the payload after verification")
    p.add_argument("path")
    p.add_argument("--out")
    p.add_argument("--force", action="store_true", help="extract even if not Verified")
    _add_trust_flags(p)
    p.set_defaults(func=cmd_unwrap)

    p = sub.add_parser("scan", parents=[common], help="count and verify .real files in a tree")
    p.add_argument("--root", required=True)
    p.add_argument("--mode", choices=("extension", "full"), default="extension")
    p.add_argument("--generate", type=int, metavar="N", help="write a synthetic N-file corpus")
    p.add_argument("--seed", type=int)
    _add_trust_flags(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("spoof-check", parents=[common], help="2D/3D test on a geometry file")
    p.add_argument("--geometry", required=True)
    p.add_argument("--threshold", type=float, default=0.005)
    p.add_argument("--plot", help="write a figure of the fitted plane")
    p.set_defaults(func=cmd_spoof_check)

    p = sub.add_parser("design-eval", parents=[common], help="score sensing designs")
    p.add_argument("--config")
    p.add_argument("--beta", help="comma-separated beta values")
    p.add_argument("--designs", help="comma-separated design names from the menu")
    p.add_argument("--samples", type=int, help="train and eval scenes per population")
    p.add_argument("--seed", type=int)
    p.add_argument("--plot", help="write an objective-vs-beta figure")
    p.set_defaults(func=cmd_design_eval)

    p = sub.add_parser("demo-spoof", parents=[common], help="recapture attack demonstration")
    p.add_argument("--config")
    p.add_argument("--genuine", action="store_true", help="run the genuine-capture control")
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--key", help="camera private key (default: built-in demo key)")
    p.add_argument("--plot", help="write a figure of the triangulated scene")
    _add_trust_flags(p)
    p.set_defaults(func=cmd_demo_spoof)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except RealsealError as exc:
        sys.stderr.write(f"realseal: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"realseal: {exc}\n")
        return EX_USAGE if isinstance(exc, FileNotFoundError) else 65


if __name__ == "__main__":
    sys.exit(main())
