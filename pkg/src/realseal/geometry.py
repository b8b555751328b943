"""Two-view pinhole geometry: projection, midpoint triangulation, plane
fitting, and the planar-vs-volumetric scene test.

Poses map world to camera: ``x_cam = R @ x_world + t``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from realseal import grammar
from realseal.crypto import SceneLabel
from realseal.errors import (
    BehindCamera,
    DegeneratePoints,
    DegenerateRays,
    InsufficientGeometry,
)

DEFAULT_THRESHOLD = 0.005
PARALLEL_TOL = 1e-6  # radians
ORTHONORMAL_TOL = 1e-9
COLLINEAR_TOL = 1e-12


@dataclass(frozen=True)
class PinholeCamera:
    focal_px: float
    principal_point: tuple[float, float] = (0.0, 0.0)
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if not self.focal_px > 0:
            raise ValueError("focal_px must be positive")
        if (np.abs(R @ R.T - np.eye(3)).max() > ORTHONORMAL_TOL
                or abs(np.linalg.det(R) - 1.0) > ORTHONORMAL_TOL):
            raise ValueError("rotation must be orthonormal with determinant +1")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "principal_point", tuple(float(c) for c in self.principal_point))

    @classmethod
    def at(cls, center, focal_px: float, principal_point=(0.0, 0.0), rotation=None):
        """Camera whose optical center sits at world point ``center``."""
        R = np.eye(3) if rotation is None else np.asarray(rotation, dtype=float)
        return cls(focal_px, principal_point, R, -R @ np.asarray(center, dtype=float))

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def to_camera(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def rays(self, pixels) -> np.ndarray:
        """World-frame ray directions (unnormalized) through ``pixels``."""
        px = np.atleast_2d(np.asarray(pixels, dtype=float))
        cx, cy = self.principal_point
        local = np.column_stack([(px[:, 0] - cx) / self.focal_px,
                                 (px[:, 1] - cy) / self.focal_px,
                                 np.ones(len(px))])
        return local @ self.rotation

    def __eq__(self, other):
        return (isinstance(other, PinholeCamera) and self.focal_px == other.focal_px
                and self.principal_point == other.principal_point
                and np.array_equal(self.rotation, other.rotation)
                and np.array_equal(self.translation, other.translation))

    __hash__ = None


@dataclass(frozen=True)
class CameraRig:
    cam_a: PinholeCamera
    cam_b: PinholeCamera

    def __post_init__(self):
        if np.allclose(self.cam_a.center, self.cam_b.center, atol=0, rtol=0):
            raise ValueError("rig cameras share an optical center (zero baseline)")

    @classmethod
    def stereo(cls, focal_px: float, baseline: float, principal_point=(0.0, 0.0)) -> "CameraRig":
        """Parallel rig: cam_a at the origin, cam_b offset by ``baseline`` along +x."""
        return cls(PinholeCamera.at((0, 0, 0), focal_px, principal_point),
                   PinholeCamera.at((baseline, 0, 0), focal_px, principal_point))

    @property
    def baseline(self) -> float:
        return float(np.linalg.norm(self.cam_b.center - self.cam_a.center))

    def transformed(self, rotation, translation, scale: float = 1.0) -> "CameraRig":
        """Rig seen after mapping the world by ``x -> scale * (R x + T)``."""
        R = np.asarray(rotation, dtype=float)
        T = np.asarray(translation, dtype=float)

        def move(cam: PinholeCamera) -> PinholeCamera:
            new_center = scale * (R @ cam.center + T)
            return PinholeCamera.at(new_center, cam.focal_px, cam.principal_point,
                                    cam.rotation @ R.T)

        return CameraRig(move(self.cam_a), move(self.cam_b))


@dataclass(frozen=True)
class CorrespondenceSet:
    pairs: np.ndarray  # shape (n, 2, 2): pair, view (a, b), (u, v)

    def __post_init__(self):
        arr = np.asarray(self.pairs, dtype=float).reshape(-1, 2, 2)
        if len(arr) < 1:
            raise ValueError("a correspondence set needs at least one pair")
        if not np.isfinite(arr).all():
            raise ValueError("correspondence coordinates must be finite")
        object.__setattr__(self, "pairs", arr)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def view_a(self) -> np.ndarray:
        return self.pairs[:, 0, :]

    @property
    def view_b(self) -> np.ndarray:
        return self.pairs[:, 1, :]


@dataclass(frozen=True)
class PlanarityReport:
    points_3d: np.ndarray
    plane_normal: np.ndarray
    plane_offset: float
    rms_residual: float
    normalized_score: float
    label: SceneLabel
    threshold_used: float

    def fields(self) -> dict[str, str]:
        return {
            "points": str(len(self.points_3d)),
            "plane_normal": " ".join(f"{c:.12g}" for c in self.plane_normal),
            "plane_offset": f"{self.plane_offset:.12g}",
            "rms_residual": f"{self.rms_residual:.12g}",
            "normalized_score": f"{self.normalized_score:.12g}",
            "label": self.label.value,
            "threshold": f"{self.threshold_used:.12g}",
        }


def project_many(points, camera: PinholeCamera) -> np.ndarray:
    pc = camera.to_camera(np.atleast_2d(points))
    if (pc[:, 2] <= 0).any():
        raise BehindCamera("point has nonpositive depth in the camera frame")
    cx, cy = camera.principal_point
    return np.column_stack([camera.focal_px * pc[:, 0] / pc[:, 2] + cx,
                            camera.focal_px * pc[:, 1] / pc[:, 2] + cy])


def project(point_3d, camera: PinholeCamera) -> tuple[float, float]:
    u, v = project_many(np.asarray(point_3d, dtype=float).reshape(1, 3), camera)[0]
    return float(u), float(v)


def triangulate_many(pixels_a, pixels_b, rig: CameraRig, parallel_tol: float = PARALLEL_TOL,
                     strict: bool = True):
    """Midpoints of the closest segments between paired back-projected rays.

    Returns ``(points, ok)``. With ``strict`` a near-parallel pair raises
    :class:`DegenerateRays`; otherwise its row is NaN and ``ok`` is False.
    """
    oa, ob = rig.cam_a.center, rig.cam_b.center
    da = rig.cam_a.rays(pixels_a)
    db = rig.cam_b.rays(pixels_b)
    da /= np.linalg.norm(da, axis=1, keepdims=True)
    db /= np.linalg.norm(db, axis=1, keepdims=True)

    n = np.cross(da, db)
    sin_angle = np.linalg.norm(n, axis=1)
    b = np.einsum("ij,ij->i", da, db)
    ok = np.arctan2(sin_angle, np.abs(b)) >= parallel_tol
    if strict and not ok.all():
        raise DegenerateRays("rays are parallel within tolerance")

    # closest points oa + s da and ob + t db; the cross-product form avoids
    # the cancellation the normal equations suffer for near-parallel rays
    w = ob - oa
    den = sin_angle * sin_angle
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.einsum("ij,ij->i", np.cross(w, db), n) / den
        t = np.einsum("ij,ij->i", np.cross(w, da), n) / den
    points = 0.5 * ((oa + s[:, None] * da) + (ob + t[:, None] * db))
    points[~ok] = np.nan
    return points, ok


def triangulate(pair, rig: CameraRig) -> np.ndarray:
    (ua, va), (ub, vb) = pair
    points, _ = triangulate_many([[ua, va]], [[ub, vb]], rig)
    return points[0]


def fit_plane(points_3d) -> tuple[np.ndarray, float, float]:
    """Orthogonal least-squares plane ``normal . x = offset``.

    The normal is the smallest principal direction of the centered points,
    oriented so its z component is positive (first nonzero component for
    planes containing the z axis direction).
    """
    pts = np.asarray(points_3d, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise DegeneratePoints("need at least three points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, sv, vt = np.linalg.svd(centered, full_matrices=False)
    if sv[0] == 0 or sv[1] <= COLLINEAR_TOL * sv[0]:
        raise DegeneratePoints("points are collinear or coincident")
    normal = vt[-1]
    nonzero = normal[np.abs(normal) > 1e-15]
    if normal[2] < 0 or (abs(normal[2]) <= 1e-15 and nonzero[-1] < 0):
        normal = -normal
    offset = float(normal @ centroid)
    residuals = centered @ normal
    rms = float(np.sqrt(np.mean(residuals ** 2)))
    return normal, offset, rms


def planarity(points_3d, reference: PinholeCamera | None = None,
              threshold: float = DEFAULT_THRESHOLD) -> PlanarityReport:
    """Plane-fit a point cloud and score it by RMS residual / mean depth.

    Depth is measured along ``reference``'s optical axis, or world z.
    """
    pts = np.asarray(points_3d, dtype=float)
    normal, offset, rms = fit_plane(pts)
    depths = reference.to_camera(pts)[:, 2] if reference is not None else pts[:, 2]
    mean_depth = float(depths.mean())
    if mean_depth <= 0:
        raise InsufficientGeometry("points do not lie in front of the reference camera")
    score = rms / mean_depth
    label = SceneLabel.LABEL_2D if score <= threshold else SceneLabel.LABEL_3D
    return PlanarityReport(pts, normal, offset, rms, score, label, threshold)


def classify_scene(correspondences: CorrespondenceSet, rig: CameraRig,
                   threshold: float = DEFAULT_THRESHOLD) -> PlanarityReport:
    corr = correspondences if isinstance(correspondences, CorrespondenceSet) \
        else CorrespondenceSet(correspondences)
    points, ok = triangulate_many(corr.view_a, corr.view_b, rig, strict=False)
    points = points[ok]
    if len(points) >= 1:
        depth_a = rig.cam_a.to_camera(points)[:, 2]
        depth_b = rig.cam_b.to_camera(points)[:, 2]
        points = points[(depth_a > 0) & (depth_b > 0)]
    if len(points) < 4:
        raise InsufficientGeometry(f"only {len(points)} usable triangulations, need 4")
    try:
        return planarity(points, rig.cam_a, threshold)
    except DegeneratePoints as exc:
        raise InsufficientGeometry(str(exc)) from exc


def correspondences_for(points_3d, rig: CameraRig, pixel_noise: float = 0.0,
                        rng: np.random.Generator | None = None) -> CorrespondenceSet:
    """Project world points into both views, optionally adding iid Gaussian
    noise of ``pixel_noise`` px to every coordinate."""
    pa = project_many(points_3d, rig.cam_a)
    pb = project_many(points_3d, rig.cam_b)
    if pixel_noise > 0:
        rng = rng if rng is not None else np.random.default_rng()
        pa = pa + rng.normal(0.0, pixel_noise, pa.shape)
        pb = pb + rng.normal(0.0, pixel_noise, pb.shape)
    return CorrespondenceSet(np.stack([pa, pb], axis=1))


# -- key=value files ---------------------------------------------------------

def _camera_fields(cam: PinholeCamera) -> dict[str, str]:
    return {
        "focal_px": repr(cam.focal_px),
        "cx": repr(cam.principal_point[0]),
        "cy": repr(cam.principal_point[1]),
        "rotation": " ".join(repr(float(x)) for x in cam.rotation.ravel()),
        "translation": " ".join(repr(float(x)) for x in cam.translation),
    }


def _camera_from(fields: dict[str, str], prefix: str) -> PinholeCamera:
    get = lambda name, default=None: fields.get(f"{prefix}.{name}", default)  # noqa: E731
    rotation = get("rotation")
    return PinholeCamera(
        focal_px=float(get("focal_px")),
        principal_point=(float(get("cx", 0)), float(get("cy", 0))),
        rotation=np.array(rotation.split(), dtype=float).reshape(3, 3) if rotation else np.eye(3),
        translation=np.array(get("translation", "0 0 0").split(), dtype=float),
    )


def rig_fields(rig: CameraRig) -> dict[str, str]:
    out = {}
    for name, cam in (("cam_a", rig.cam_a), ("cam_b", rig.cam_b)):
        out.update({f"{name}.{k}": v for k, v in _camera_fields(cam).items()})
    return out


def correspondence_fields(corr: CorrespondenceSet) -> dict[str, str]:
    out = {}
    for i, ((ua, va), (ub, vb)) in enumerate(corr.pairs):
        out[f"pair.{i}.a.u"] = repr(float(ua))
        out[f"pair.{i}.a.v"] = repr(float(va))
        out[f"pair.{i}.b.u"] = repr(float(ub))
        out[f"pair.{i}.b.v"] = repr(float(vb))
    return out


def dump_geometry(rig: CameraRig, corr: CorrespondenceSet | None = None) -> bytes:
    fields = rig_fields(rig)
    if corr is not None:
        fields.update(correspondence_fields(corr))
    return grammar.dumps(fields)


def load_geometry(data: bytes | str) -> tuple[CameraRig, CorrespondenceSet | None]:
    """Parse a rig (and optional correspondences) from key=value text.

    ``stereo.focal_px`` / ``stereo.baseline`` is accepted as a shorthand
    for a parallel rig.
    """
    fields = grammar.loads(data, strict=False)
    if "stereo.baseline" in fields:
        rig = CameraRig.stereo(float(fields["stereo.focal_px"]), float(fields["stereo.baseline"]))
    else:
        rig = CameraRig(_camera_from(fields, "cam_a"), _camera_from(fields, "cam_b"))
    groups = grammar.indexed(fields, "pair")
    if not groups:
        return rig, None
    pairs = [[[float(g["a.u"]), float(g["a.v"])], [float(g["b.u"]), float(g["b.v"])]]
             for g in groups]
    return rig, CorrespondenceSet(np.array(pairs))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def as_points(points: Sequence) -> np.ndarray:
    return np.asarray(points, dtype=float).reshape(-1, 3)
