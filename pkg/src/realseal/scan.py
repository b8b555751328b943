"""Directory scanning for ``.real`` files and a synthetic corpus generator."""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from realseal.container import SUFFIX, Verdict, verify_container, write_container
from realseal.crypto import (
    ProvenanceManifest,
    SceneLabel,
    content_hash,
    dump_key,
    generate_keypair,
    sign_manifest,
)


@dataclass
class ScanReport:
    total_files: int = 0
    real_extension_files: int = 0
    verified: int = 0
    tampered: int = 0
    untrusted: int = 0
    revoked: int = 0
    malformed: int = 0
    unreadable: int = 0
    extension_scan_duration: float = 0.0
    full_scan_duration: float = 0.0
    mode: str = "extension"

    @property
    def partition_ok(self) -> bool:
        return (self.verified + self.tampered + self.untrusted + self.revoked
                + self.malformed) == self.real_extension_files

    def fields(self) -> dict[str, str]:
        return {
            "mode": self.mode,
            "total_files": str(self.total_files),
            "real_extension_files": str(self.real_extension_files),
            "verified": str(self.verified),
            "tampered": str(self.tampered),
            "untrusted": str(self.untrusted),
            "revoked": str(self.revoked),
            "malformed": str(self.malformed),
            "unreadable": str(self.unreadable),
            "extension_scan_duration": f"{self.extension_scan_duration:.6f}",
            "full_scan_duration": f"{self.full_scan_duration:.6f}",
        }


def _walk(root: Path) -> list[str]:
    paths = []
    for dirpath, _dirs, files in os.walk(root, onerror=lambda err: None):
        paths.extend(os.path.join(dirpath, f) for f in files)
    return paths


_COUNTER = {
    Verdict.VERIFIED: "verified",
    Verdict.TAMPERED: "tampered",
    Verdict.UNTRUSTED_SIGNER: "untrusted",
    Verdict.REVOKED_SIGNER: "revoked",
    Verdict.MALFORMED: "malformed",
}


def _verify_path(path: str, trust_list) -> Verdict | None:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError:
        return None
    return verify_container(data, trust_list).verdict


def cmd_scan(root, trust_list=None, mode: str = "extension", workers: int = 8) -> ScanReport:
    """Count ``.real`` files by name; in ``full`` mode also parse and verify each.

    Timings: the extension pass only lists names; the full pass walks the
    tree again and reads and verifies every ``.real`` file.
    """
    if mode not in ("extension", "full"):
        raise ValueError(f"unknown scan mode {mode!r}")
    root = Path(root)
    report = ScanReport(mode=mode)

    start = time.perf_counter()
    paths = _walk(root)
    real = [p for p in paths if p.endswith(SUFFIX)]
    report.extension_scan_duration = time.perf_counter() - start
    report.total_files = len(paths)
    report.real_extension_files = len(real)
    if mode == "extension":
        return report

    start = time.perf_counter()
    real = sorted(p for p in _walk(root) if p.endswith(SUFFIX))
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        verdicts = list(pool.map(lambda p: _verify_path(p, trust_list), real))
    report.full_scan_duration = time.perf_counter() - start
    for verdict in verdicts:
        if verdict is None:
            report.unreadable += 1
            verdict = Verdict.MALFORMED
        name = _COUNTER[verdict]
        setattr(report, name, getattr(report, name) + 1)
    return report


def generate_corpus(root, count: int, real_fraction: float = 0.1, seed: int = 0):
    """Write ``count`` files under ``root``; about ``real_fraction`` end in ``.real``.

    The ``.real`` files cycle through verified, tampered, untrusted, revoked
    and malformed (a renamed plain file) cases. Returns ``(authority, expected)``
    where ``expected`` maps verdict name to count.
    """
    from realseal.trust import TrustAuthority

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    when = datetime(2024, 2, 20, tzinfo=timezone.utc)

    trusted = generate_keypair(bytes([1]) * 32)
    revoked = generate_keypair(bytes([2]) * 32)
    stranger = generate_keypair(bytes([3]) * 32)
    ca = TrustAuthority(generate_keypair(bytes([4]) * 32), admin_token="corpus",
                        clock=lambda: when)
    for name, kp in (("Trusted Optics", trusted), ("Leaky Sensors", revoked)):
        ca.approve(ca.register_manufacturer(name, kp.public_key).fingerprint, "corpus")
    ca.revoke(revoked.fingerprint, "corpus", "key leaked")

    def sealed(payload: bytes, kp) -> bytes:
        m = ProvenanceManifest(kp.fingerprint, content_hash(payload), "png",
                               SceneLabel.LABEL_3D, when, "corpus-cam")
        return write_container(payload, "png", m, sign_manifest(m, kp.private_key))

    n_real = int(round(count * real_fraction))
    cases = ["verified", "tampered", "untrusted", "revoked", "malformed"]
    expected = dict.fromkeys(cases, 0)
    for i in range(count):
        sub = root / f"d{i % 16:02d}"
        sub.mkdir(exist_ok=True)
        payload = rng.bytes(int(rng.integers(64, 512)))
        if i >= n_real:
            ext = ("png", "jpg", "txt", "mp4")[i % 4]
            (sub / f"file{i:06d}.{ext}").write_bytes(payload)
            continue
        case = cases[i % len(cases)]
        expected[case] += 1
        if case == "verified":
            blob = sealed(payload, trusted)
        elif case == "tampered":
            blob = bytearray(sealed(payload, trusted))
            blob[20] ^= 0x01  # inside the payload
            blob = bytes(blob)
        elif case == "untrusted":
            blob = sealed(payload, stranger)
        elif case == "revoked":
            blob = sealed(payload, revoked)
        else:
            blob = payload
        (sub / f"file{i:06d}.png.real").write_bytes(blob)

    trust_dir = root / "_trust"
    trust_dir.mkdir(exist_ok=True)
    (trust_dir / "trustlist.txt").write_bytes(ca.get_trust_list_bytes())
    (trust_dir / "ca.pub").write_text(dump_key(ca.ca_public_key, "public"))
    return ca, expected
