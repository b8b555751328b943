"""Simulated signing camera and the screen-recapture attack."""

from __future__ import annotations

import enum
import struct
import zlib
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from realseal import grammar
from realseal.container import (
    Verdict,
    VerificationReport,
    read_container,
    verify_container,
    write_container,
)
from realseal.crypto import (
    Fingerprint,
    KeyPair,
    ProvenanceManifest,
    SceneLabel,
    content_hash,
    generate_keypair,
    sign_manifest,
)
from realseal.geometry import (
    DEFAULT_THRESHOLD,
    CameraRig,
    CorrespondenceSet,
    PlanarityReport,
    classify_scene,
    correspondences_for,
    project_many,
)

IMAGE_WIDTH = 64
IMAGE_HEIGHT = 48
EPOCH = datetime(2024, 2, 20, tzinfo=timezone.utc)


class LabelPolicy(enum.Enum):
    AUTO = "auto"
    FORCE_2D = "2d"
    FORCE_3D = "3d"


@dataclass(frozen=True)
class DeviceIdentity:
    device_id: str
    keypair: KeyPair

    @property
    def fingerprint(self) -> Fingerprint:
        return self.keypair.fingerprint

    @classmethod
    def from_seed(cls, device_id: str, seed: bytes) -> "DeviceIdentity":
        return cls(device_id, generate_keypair(seed))


def encode_png(gray: np.ndarray) -> bytes:
    """8-bit grayscale PNG, filter 0 on every row, fixed zlib level."""
    img = np.asarray(gray, dtype=np.uint8)
    h, w = img.shape

    def chunk(kind: bytes, data: bytes) -> bytes:
        return (struct.pack(">I", len(data)) + kind + data
                + struct.pack(">I", zlib.crc32(kind + data) & 0xFFFFFFFF))

    raw = b"".join(b"\x00" + img[row].tobytes() for row in range(h))
    return (b"\x89PNG\r\n\x1a\n"
            + chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 0, 0, 0, 0))
            + chunk(b"IDAT", zlib.compress(raw, 9))
            + chunk(b"IEND", b""))


def render_points(points_3d, rig: CameraRig, width: int = IMAGE_WIDTH,
                  height: int = IMAGE_HEIGHT) -> bytes:
    """Splat scene points seen by cam_a into a small grayscale PNG.

    Pixel positions are rescaled to fit the frame; brightness falls off
    with depth so nearer points are lighter.
    """
    pts = np.asarray(points_3d, dtype=float)
    px = project_many(pts, rig.cam_a)
    depth = rig.cam_a.to_camera(pts)[:, 2]
    img = np.zeros((height, width), dtype=np.uint8)
    lo, hi = px.min(axis=0), px.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    cols = np.clip(((px[:, 0] - lo[0]) / span[0] * (width - 1)).round().astype(int), 0, width - 1)
    rows = np.clip(((px[:, 1] - lo[1]) / span[1] * (height - 1)).round().astype(int), 0, height - 1)
    shade = np.clip(255.0 * depth.min() / depth, 32, 255).astype(np.uint8)
    for r, c, s in zip(rows, cols, shade):
        img[r, c] = max(img[r, c], s)
    return encode_png(img)


def render_screen(payload: bytes, width: int = IMAGE_WIDTH, height: int = IMAGE_HEIGHT) -> bytes:
    """What the camera sees when pointed at a screen showing ``payload``:
    the payload bytes tiled over the frame (content never affects verdicts)."""
    data = np.frombuffer(payload or b"\x00", dtype=np.uint8)
    reps = -(-width * height // len(data))
    img = np.tile(data, reps)[: width * height].reshape(height, width)
    return encode_png(img)


def _manifest(device: DeviceIdentity, payload: bytes, label: SceneLabel,
              capture_time: datetime | None) -> ProvenanceManifest:
    when = (capture_time or datetime.now(timezone.utc)).replace(microsecond=0)
    return ProvenanceManifest(
        signer_fingerprint=device.fingerprint,
        content_hash=content_hash(payload),
        inner_format="png",
        scene_label=label,
        capture_time=when,
        device_id=device.device_id,
    )


def _sign_and_wrap(device: DeviceIdentity, payload: bytes, label: SceneLabel,
                   capture_time: datetime | None) -> bytes:
    manifest = _manifest(device, payload, label, capture_time)
    return write_container(payload, "png", manifest,
                           sign_manifest(manifest, device.keypair.private_key))


def capture(scene, rig: CameraRig, device: DeviceIdentity,
            scene_label_policy: LabelPolicy = LabelPolicy.AUTO, *,
            pixel_noise: float = 0.0, seed=0, threshold: float = DEFAULT_THRESHOLD,
            capture_time: datetime | None = None) -> tuple[bytes, CorrespondenceSet]:
    """Photograph ``scene`` with ``rig`` and emit a signed container.

    With the AUTO policy the 2D/3D label comes from the stereo planarity
    test on the same correspondences that are returned.
    """
    pts = np.asarray(scene, dtype=float)
    corr = correspondences_for(pts, rig, pixel_noise, np.random.default_rng(seed))
    policy = LabelPolicy(scene_label_policy)
    if policy is LabelPolicy.AUTO:
        label = classify_scene(corr, rig, threshold).label
    else:
        label = SceneLabel.LABEL_2D if policy is LabelPolicy.FORCE_2D else SceneLabel.LABEL_3D
    payload = render_points(pts, rig)
    return _sign_and_wrap(device, payload, label, capture_time), corr


def screen_points(rig: CameraRig, screen_depth: float, count: int = 64, seed=0,
                  halfwidth: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    xy = rng.uniform(-halfwidth, halfwidth, (count, 2))
    return np.column_stack([xy, np.full(count, float(screen_depth))])


def recapture_attack(payload: bytes, rig: CameraRig, device: DeviceIdentity,
                     screen_depth: float, *, pixel_noise: float = 0.0, seed=0,
                     points: int = 64, capture_time: datetime | None = None
                     ) -> tuple[bytes, CorrespondenceSet]:
    """Photograph a synthetic image shown on a flat screen with a trusted
    camera, and claim the result is a 3D scene."""
    pts = screen_points(rig, screen_depth, points, seed)
    corr = correspondences_for(pts, rig, pixel_noise, np.random.default_rng([seed, 1]))
    rendition = render_screen(payload)
    return _sign_and_wrap(device, rendition, SceneLabel.LABEL_3D, capture_time), corr


@dataclass(frozen=True)
class DemoConfig:
    focal_px: float = 500.0
    baseline: float = 1.0
    screen_depth: float = 5.0
    pixel_noise: float = 0.2
    threshold: float = DEFAULT_THRESHOLD
    points: int = 64
    seed: int = 0
    genuine: bool = False
    attacker_registered: bool = True
    real_depth_halfwidth: float = 1.0
    ca_url: str = ""
    trustlist_path: str = ""
    ca_pubkey_path: str = ""

    @classmethod
    def from_text(cls, data: bytes | str) -> "DemoConfig":
        fields = grammar.loads(data, strict=False)
        kw = {}
        for name, f in cls.__dataclass_fields__.items():
            if name not in fields:
                continue
            raw = fields[name]
            if f.type in ("float",):
                kw[name] = float(raw)
            elif f.type in ("int",):
                kw[name] = int(raw)
            elif f.type in ("bool",):
                kw[name] = raw.strip().lower() in ("1", "true", "yes")
            else:
                kw[name] = raw
        unknown = set(fields) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown demo config keys: {sorted(unknown)}")
        return cls(**kw)


@dataclass(frozen=True)
class DemoReport:
    pki_verdict: Verdict
    planarity: PlanarityReport | None
    claimed_label: SceneLabel | None
    scenario: str
    verification: VerificationReport | None = None
    correspondences: CorrespondenceSet | None = field(default=None, repr=False)

    @property
    def deceived(self) -> bool:
        return (self.pki_verdict is Verdict.VERIFIED and self.planarity is not None
                and self.planarity.label is SceneLabel.LABEL_2D)

    @property
    def label_conflict(self) -> bool:
        """The mitigation: the signed label disagrees with measured geometry."""
        return (self.planarity is not None and self.claimed_label is not None
                and self.claimed_label is not self.planarity.label)

    def fields(self) -> dict[str, str]:
        out = {
            "scenario": self.scenario,
            "pki_verdict": self.pki_verdict.value,
            "claimed_label": self.claimed_label.value if self.claimed_label else "",
            "deceived": "true" if self.deceived else "false",
            "label_conflict": "true" if self.label_conflict else "false",
            "mitigation": "cross-check signed 2D/3D label against stereo planarity",
        }
        if self.planarity is not None:
            out.update({f"planarity.{k}": v for k, v in self.planarity.fields().items()})
        return out


def run_spoof_demo(config: DemoConfig = DemoConfig(), trust_list=None, device=None
                   ) -> DemoReport:
    """Mount the recapture attack (or a genuine capture when
    ``config.genuine``) and run both the PKI and the geometric checks.

    Without an explicit ``trust_list`` an in-process CA is stood up with the
    camera approved (or, when ``attacker_registered`` is false, with a
    different manufacturer approved).
    """
    from realseal.trust import TrustAuthority

    rig = CameraRig.stereo(config.focal_px, config.baseline)
    device = device or DeviceIdentity.from_seed("demo-cam-0001", bytes(range(32)))
    if trust_list is None:
        ca = TrustAuthority(generate_keypair(bytes([7]) * 32), admin_token="demo",
                            clock=lambda: EPOCH)
        trusted_key = device.keypair.public_key if config.attacker_registered \
            else generate_keypair(bytes([9]) * 32).public_key
        record = ca.register_manufacturer("Demo Camera Co", trusted_key)
        trust_list = ca.approve(record.fingerprint, "demo")

    if config.genuine:
        from realseal.sensing import ScenePopulation, sample_scene

        scene = sample_scene(ScenePopulation.real(points_per_scene=config.points,
                                                  depth_center=config.screen_depth,
                                                  depth_halfwidth=config.real_depth_halfwidth),
                             config.seed)
        blob, corr = capture(scene, rig, device, LabelPolicy.AUTO,
                             pixel_noise=config.pixel_noise, seed=config.seed,
                             threshold=config.threshold, capture_time=EPOCH)
        scenario = "genuine-capture"
    else:
        synthetic = render_screen(b"synthetic lighthouse" * 8)
        blob, corr = recapture_attack(synthetic, rig, device, config.screen_depth,
                                      pixel_noise=config.pixel_noise, seed=config.seed,
                                      points=config.points, capture_time=EPOCH)
        scenario = "screen-recapture"

    verification = verify_container(blob, trust_list)
    claimed = read_container(blob).scene_label
    report = classify_scene(corr, rig, config.threshold)
    return DemoReport(verification.verdict, report, claimed, scenario, verification, corr)
