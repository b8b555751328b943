"""End-to-end acceptance checks, one per criterion.

Each test records a one-line PASS/FAIL summary (printed at the end of the
pytest run) and then asserts. Thresholds are the contract values; nothing
here is tuned to make a criterion pass.
"""

import math
import random
import time

import numpy as np
import pytest
from oracles import brute_force_plane, expected_mutation_verdict

import build
from realseal.capture import DeviceIdentity, capture, recapture_attack
from realseal.cli import main
from realseal.client import TrustClient, load_trust_list_file
from realseal.container import Verdict, read_container, verify_container, write_container
from realseal.crypto import (
    ProvenanceManifest,
    SceneLabel,
    content_hash,
    dump_key,
    generate_keypair,
    sign_manifest,
)
from realseal.errors import RejectedFormat, RejectedSignature
from realseal.geometry import (
    CameraRig,
    PinholeCamera,
    classify_scene,
    correspondences_for,
    fit_plane,
    project_many,
    random_rotation,
    triangulate_many,
)
from realseal.scan import cmd_scan, generate_corpus
from realseal.sensing import (
    DesignKind,
    Experiment,
    ScenePopulation,
    beta_sweep,
    default_menu,
    log_likelihood,
    log_likelihood_gradient,
    sample_scene,
)
from realseal.server import BackgroundServer
from realseal.trust import TrustAuthority, validate_trust_list


@pytest.fixture(autouse=True)
def no_env(monkeypatch):
    for var in ("REALSEAL_CA_URL", "REALSEAL_CA_PUBKEY", "REALSEAL_ADMIN_TOKEN"):
        monkeypatch.delenv(var, raising=False)


def test_criterion_1_round_trips(criterion):
    rng = random.Random(1)
    ca = TrustAuthority(build.CA, "t", clock=lambda: build.WHEN)
    signers = [generate_keypair(bytes([40 + i]) * 32) for i in range(10)]
    for i, kp in enumerate(signers):
        ca.approve(ca.register_manufacturer(f"maker {i}", kp.public_key).fingerprint, "t")
    tl = ca.get_trust_list()

    start = time.perf_counter()
    verified = 0
    for i in range(500):
        kp = rng.choice(signers)
        payload = rng.randbytes(rng.choice([0, 1, 17, 1000, rng.randrange(1 << 16)]))
        fmt = rng.choice(["png", "jpg", "mp4", "heic", "raw"])
        m = ProvenanceManifest(kp.fingerprint, content_hash(payload), fmt,
                               rng.choice(list(SceneLabel)), build.WHEN,
                               "".join(rng.choice("ab=%\nc d") for _ in range(rng.randrange(20))))
        blob = write_container(payload, fmt, m, sign_manifest(m, kp.private_key))
        c = read_container(blob)
        assert c.payload == payload and c.manifest == m
        verified += verify_container(blob, tl).verdict is Verdict.VERIFIED
    elapsed = time.perf_counter() - start
    ok = criterion(1, verified == 500 and elapsed < 30,
                   f"{verified}/500 Verified in {elapsed:.2f} s (limit 30 s)")
    assert ok


def test_criterion_2_tamper_completeness(criterion):
    tl = build.authority().get_trust_list()
    rng = random.Random(2)
    verified = mismatched = 0
    counts = {}
    for i in range(20):
        kp = build.REVOKED if i % 5 == 0 else build.TRUSTED
        payload = rng.randbytes(rng.randrange(1, 300))
        blob = build.sealed(kp, payload)
        assert verify_container(blob, tl).verdict in (Verdict.VERIFIED, Verdict.REVOKED_SIGNER)
        for _ in range(100):
            pos = rng.randrange(len(blob))
            new = blob[pos] ^ rng.randrange(1, 256)
            mutated = bytearray(blob)
            mutated[pos] = new
            got = verify_container(bytes(mutated), tl).verdict
            verified += got is Verdict.VERIFIED
            mismatched += got.value != expected_mutation_verdict(blob, pos, new)
            counts[got.value] = counts.get(got.value, 0) + 1
    detail = ", ".join(f"{k} {v}" for k, v in sorted(counts.items()))
    ok = criterion(2, verified == 0 and mismatched == 0,
                   f"2000 mutations: {verified} Verified, {mismatched} off the verdict-order "
                   f"oracle ({detail})")
    assert ok


def test_criterion_3_trust_lifecycle(criterion, tmp_path, capsys):
    authority = TrustAuthority(generate_keypair(bytes([0x33]) * 32), "admin",
                               tmp_path / "ops.log")
    ca_pub = tmp_path / "ca.pub"
    ca_pub.write_text(dump_key(authority.ca_public_key, "public"))
    device = generate_keypair(bytes([0x34]) * 32)
    payload = b"lifecycle capture"
    m = ProvenanceManifest(device.fingerprint, content_hash(payload), "png",
                           SceneLabel.LABEL_3D, build.WHEN, "cam")
    photo = tmp_path / "photo.png.real"
    photo.write_bytes(write_container(payload, "png", m, sign_manifest(m, device.private_key)))

    steps = []
    with BackgroundServer(authority) as srv:
        client = TrustClient(srv.url, authority.ca_public_key, ttl=0)

        def verify_exit():
            code = main(["verify", str(photo), "--ca-url", srv.url, "--ca-pubkey", str(ca_pub),
                         "--format", "machine"])
            capsys.readouterr()
            return code

        fp = client.register("Lifecycle Optics", device.public_key)
        versions = [client.approve(fp, "admin")]
        steps.append(("verify after approve", verify_exit(), 0))
        versions.append(client.revoke(fp, "admin", "key compromise"))
        steps.append(("verify after revoke", verify_exit(), 5))
        data = client.fetch_bytes()

    validate_trust_list(data, authority.ca_public_key)
    rejected = 0
    rng = random.Random(3)
    for pos in range(len(data)):
        mutated = bytearray(data)
        mutated[pos] ^= rng.randrange(1, 256)
        try:
            validate_trust_list(bytes(mutated), authority.ca_public_key)
        except (RejectedSignature, RejectedFormat):
            rejected += 1
    increasing = all(b > a for a, b in zip(versions, versions[1:]))
    steps_ok = all(got == want for _, got, want in steps)
    ok = criterion(3, steps_ok and increasing and rejected == len(data),
                   f"exits {[got for _, got, _ in steps]} (want [0, 5]), versions {versions}, "
                   f"{rejected}/{len(data)} single-byte trust-list mutations rejected")
    assert ok


def test_criterion_4_demo_spoof(criterion, capsys):
    from realseal import grammar

    start = time.perf_counter()
    code = main(["demo-spoof", "--format", "machine"])
    attack = grammar.loads(capsys.readouterr().out)
    code_g = main(["demo-spoof", "--genuine", "--format", "machine"])
    genuine = grammar.loads(capsys.readouterr().out)
    elapsed = time.perf_counter() - start
    ok = (code == 0 and code_g == 0 and attack["pki_verdict"] == "Verified"
          and attack["planarity.label"] == "2D" and attack["deceived"] == "true"
          and genuine["deceived"] == "false" and elapsed < 5)
    criterion(4, ok, f"attack: pki={attack['pki_verdict']} label={attack['planarity.label']} "
                     f"deceived={attack['deceived']}; control: deceived={genuine['deceived']}; "
                     f"{elapsed:.2f} s (limit 5 s)")
    assert ok


def _random_rig(rng):
    while True:
        cams = [PinholeCamera.at(rng.uniform(-2, 2, 3), rng.uniform(100, 2000),
                                 rng.uniform(-100, 100, 2), random_rotation(rng))
                for _ in range(2)]
        if np.linalg.norm(cams[0].center - cams[1].center) > 0.1:
            return CameraRig(*cams)


def _points_in_front(rig, rng, count):
    """Points near cam_a's optical axis that both cameras see."""
    depth = rng.uniform(2, 10, 50 * count)
    p = rig.cam_a.center + np.outer(depth, rig.cam_a.rotation[2]) + rng.normal(size=(len(depth), 3))
    keep = (rig.cam_a.to_camera(p)[:, 2] > 0.1) & (rig.cam_b.to_camera(p)[:, 2] > 0.1)
    return p[keep][:count]


def test_criterion_5_geometry_oracles(criterion):
    rng = np.random.default_rng(5)
    worst_inv, cases = 0.0, 0
    while cases < 10_000:
        rig = _random_rig(rng)
        pts = _points_in_front(rig, rng, min(10, 10_000 - cases))
        if len(pts) == 0:
            continue
        got, ok = triangulate_many(project_many(pts, rig.cam_a), project_many(pts, rig.cam_b),
                                   rig)
        # near-parallel rays are excluded by the triangulation contract
        if ok.any():
            worst_inv = max(worst_inv, float(np.abs(got[ok] - pts[ok]).max()))
        cases += int(ok.sum())

    worst_plane = 0.0
    stereo = CameraRig.stereo(500, 1.0)
    for _ in range(100):
        R = random_rotation(rng)
        if abs(R[2, 2]) < 0.3:  # keep the plane facing the cameras
            R = np.eye(3)
        local = np.column_stack([rng.uniform(-1, 1, (40, 2)), np.zeros(40)])
        pts = local @ R.T + [0, 0, rng.uniform(3, 8)]
        score = classify_scene(correspondences_for(pts, stereo), stereo).normalized_score
        worst_plane = max(worst_plane, score)

    worst_fit = 0.0
    for _ in range(100):
        pts = rng.normal(size=(rng.integers(5, 60), 3)) * rng.uniform(0.1, 3, 3) \
            + rng.normal(size=3) * 5
        n, d, r = fit_plane(pts)
        bn, bd, br = brute_force_plane(pts)
        worst_fit = max(worst_fit, float(np.abs(n - bn).max()), abs(d - bd), abs(r - br))
    ok = criterion(5, worst_inv <= 1e-9 and worst_plane <= 1e-12 and worst_fit <= 1e-9,
                   f"inversion max err {worst_inv:.1e} over 10000 (limit 1e-9); exact-plane "
                   f"score max {worst_plane:.1e} (limit 1e-12); fit_plane vs brute force max "
                   f"diff {worst_fit:.1e} over 100 (limit 1e-9)")
    assert ok


def test_criterion_6_operating_point(criterion, tmp_path):
    rig = CameraRig.stereo(500, 1.0)
    device = DeviceIdentity("acceptance-cam", build.TRUSTED)
    sigma, tau = 0.5, 0.005
    start = time.perf_counter()
    screen, real = [], []
    for seed in range(200):
        _, corr = recapture_attack(b"screen", rig, device, 5.0, pixel_noise=sigma, seed=seed,
                                   capture_time=build.WHEN)
        screen.append(classify_scene(corr, rig, tau).normalized_score)
        scene = sample_scene(ScenePopulation.real(depth_center=5.0, depth_halfwidth=1.0),
                             [6, seed])
        blob, corr = capture(scene, rig, device, pixel_noise=sigma, seed=seed, threshold=tau,
                             capture_time=build.WHEN)
        real.append(classify_scene(corr, rig, tau).normalized_score)
        assert read_container(blob).scene_label is classify_scene(corr, rig, tau).label
    elapsed = time.perf_counter() - start
    screen, real = np.array(screen), np.array(real)
    rate_2d = float(np.mean(screen <= tau))
    rate_3d = float(np.mean(real > tau))
    floor = sigma * math.sqrt(2) * 5.0 / (500 * 1.0)
    from realseal.plotting import plot_scores

    plot_scores(real, screen, tau, tmp_path / "operating_point.png")
    ok = criterion(6, rate_2d >= 0.95 and rate_3d >= 0.95 and elapsed < 60,
                   f"screens labeled 2D {rate_2d:.1%}, real labeled 3D {rate_3d:.1%} "
                   f"(need >= 95% each); median screen score {np.median(screen):.5f} vs "
                   f"tau {tau} (disparity-noise floor {floor:.5f}); {elapsed:.1f} s")
    assert ok


def test_criterion_7_design_harness(criterion):
    menu = default_menu()
    experiment = Experiment(seed=7)
    betas = [0, 0.1, 0.5, 1, 5, 10]
    sweep = beta_sweep(menu, experiment, betas)
    at_zero = {r.design.kind: r for r in sweep[0][2]}
    gap = at_zero[DesignKind.STEREO].objective - at_zero[DesignKind.MONO].objective
    chance = at_zero[DesignKind.MONO].objective
    costs = [chosen.cost for _, chosen, _ in sweep]
    monotone = all(b <= a for a, b in zip(costs, costs[1:]))

    rng = np.random.default_rng(7)
    x = rng.normal(size=200)
    y = (rng.uniform(size=200) < 0.5).astype(float)
    worst = 0.0
    for w, b in [(0.0, 0.0), (0.7, -0.3), (-1.5, 2.0), (3.0, 0.1)]:
        gw, gb = log_likelihood_gradient(w, b, x, y)
        h = 1e-5
        fw = (log_likelihood(w + h, b, x, y) - log_likelihood(w - h, b, x, y)) / (2 * h)
        fb = (log_likelihood(w, b + h, x, y) - log_likelihood(w, b - h, x, y)) / (2 * h)
        worst = max(worst, abs(gw - fw) / max(abs(fw), 1e-12), abs(gb - fb) / max(abs(fb), 1e-12))
    ok = (gap >= 1.0 and abs(chance - 2 * math.log(0.5)) <= 0.05 and monotone and worst <= 1e-6)
    criterion(7, ok, f"stereo - mono = {gap:.3f} (need >= 1.0); mono = {chance:.4f} "
                     f"(2 ln 0.5 = {2 * math.log(0.5):.4f} +/- 0.05); selected costs {costs}; "
                     f"gradient rel err {worst:.1e}")
    assert ok


def test_criterion_8_scan_benchmark(criterion, tmp_path):
    root = tmp_path / "corpus"
    ca, expected = generate_corpus(root, 10_000, real_fraction=0.1, seed=8)
    tl = load_trust_list_file(root / "_trust" / "trustlist.txt", ca.ca_public_key)
    ext = cmd_scan(root, tl, mode="extension")
    full = cmd_scan(root, tl, mode="full")
    counts_ok = all(getattr(full, k) == v for k, v in expected.items())
    ok = (ext.extension_scan_duration < full.full_scan_duration and full.partition_ok
          and counts_ok and ext.real_extension_files == full.real_extension_files == 1000)
    criterion(8, ok, f"{full.total_files} files, {full.real_extension_files} .real; extension "
                     f"{ext.extension_scan_duration:.3f} s < full {full.full_scan_duration:.3f} s;"
                     f" partition {'holds' if full.partition_ok else 'broken'}")
    assert ok
