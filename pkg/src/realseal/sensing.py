"""Desk-scale sensing-design search.

A design picks what the camera measures. For each design we simulate real
(volumetric) and spoof (screen-like) scenes, reduce each observation to one
planarity feature, fit a logistic discriminator on it, and score

    objective = mean log D(real) + mean log(1 - D(spoof)) - beta * cost

The design with the highest objective wins. The cost is a penalty: larger
beta favours cheaper hardware.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from realseal import grammar
from realseal.errors import DegenerateTraining, InsufficientGeometry
from realseal.geometry import CameraRig, classify_scene, correspondences_for, planarity

EPSILON = 1e-6
ITERATIONS = 500
STEP = 0.1
DEFAULT_FOCAL = 500.0


class DesignKind(enum.Enum):
    MONO = "mono"
    STEREO = "stereo"
    STEREO_WIDE = "stereowide"
    DEPTH_SENSOR = "depthsensor"

    @property
    def is_stereo(self) -> bool:
        return self in (DesignKind.STEREO, DesignKind.STEREO_WIDE)


@dataclass(frozen=True)
class SensingDesign:
    name: str
    kind: DesignKind
    cost: float
    baseline: float = 0.0
    pixel_noise_sigma: float = 0.0
    depth_noise_sigma: float = 0.0
    focal_px: float = DEFAULT_FOCAL

    def __post_init__(self):
        if self.cost < 0:
            raise ValueError("cost must be nonnegative")
        if self.kind.is_stereo and self.baseline <= 0:
            raise ValueError("stereo designs need a positive baseline")

    def rig(self) -> CameraRig:
        return CameraRig.stereo(self.focal_px, self.baseline)


def default_menu(pixel_noise_sigma: float = 0.5, depth_noise_sigma: float = 0.01
                 ) -> list[SensingDesign]:
    return [
        SensingDesign("mono", DesignKind.MONO, cost=1.0),
        SensingDesign("stereo", DesignKind.STEREO, cost=2.0, baseline=1.0,
                      pixel_noise_sigma=pixel_noise_sigma),
        SensingDesign("stereo-wide", DesignKind.STEREO_WIDE, cost=2.5, baseline=2.0,
                      pixel_noise_sigma=pixel_noise_sigma),
        SensingDesign("depth-sensor", DesignKind.DEPTH_SENSOR, cost=4.0,
                      depth_noise_sigma=depth_noise_sigma),
    ]


class PopulationKind(enum.Enum):
    REAL = "real"
    SPOOF = "spoof"


@dataclass(frozen=True)
class ScenePopulation:
    kind: PopulationKind
    points_per_scene: int = 64
    depth_center: float = 5.0
    depth_halfwidth: float = 1.0
    plane_depth: float = 5.0
    perturbation_sigma: float = 0.0
    lateral_halfwidth: float = 1.0

    def __post_init__(self):
        if self.kind is PopulationKind.REAL and self.depth_halfwidth <= 0:
            raise ValueError("real populations need a positive depth halfwidth")
        if self.perturbation_sigma < 0:
            raise ValueError("perturbation_sigma must be nonnegative")
        if self.points_per_scene < 4:
            raise ValueError("need at least 4 points per scene")

    @classmethod
    def real(cls, **kw) -> "ScenePopulation":
        return cls(PopulationKind.REAL, **kw)

    @classmethod
    def spoof(cls, **kw) -> "ScenePopulation":
        return cls(PopulationKind.SPOOF, **kw)


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def sample_scene(population: ScenePopulation, seed) -> np.ndarray:
    """Sample an (n, 3) world point set; depth is world z."""
    rng = _rng(seed)
    n = population.points_per_scene
    xy = rng.uniform(-population.lateral_halfwidth, population.lateral_halfwidth, (n, 2))
    if population.kind is PopulationKind.REAL:
        c, h = population.depth_center, population.depth_halfwidth
        z = rng.uniform(c - h, c + h, n)
    else:
        z = np.full(n, float(population.plane_depth))
        if population.perturbation_sigma > 0:
            z = z + rng.normal(0.0, population.perturbation_sigma, n)
    return np.column_stack([xy, z])


def observe(scene: np.ndarray, design: SensingDesign, seed) -> float:
    """Planarity feature the design extracts from ``scene``."""
    if design.kind is DesignKind.MONO:
        return 0.0
    rng = _rng(seed)
    if design.kind is DesignKind.DEPTH_SENSOR:
        pts = np.array(scene, dtype=float)
        if design.depth_noise_sigma > 0:
            pts[:, 2] += rng.normal(0.0, design.depth_noise_sigma, len(pts))
        return planarity(pts).normalized_score
    rig = design.rig()
    corr = correspondences_for(scene, rig, design.pixel_noise_sigma, rng)
    return classify_scene(corr, rig).normalized_score


# -- discriminator ------------------------------------------------------------

def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


@dataclass(frozen=True)
class Discriminator:
    """p(real | feature) = sigmoid(weight * feature + bias), clamped to [eps, 1 - eps]."""

    weight: float
    bias: float
    epsilon_clamp: float = EPSILON
    loss_history: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __call__(self, features) -> np.ndarray:
        p = _sigmoid(self.weight * np.asarray(features, dtype=float) + self.bias)
        return np.clip(p, self.epsilon_clamp, 1.0 - self.epsilon_clamp)

    @classmethod
    def constant(cls, p: float, epsilon: float = EPSILON) -> "Discriminator":
        return cls(0.0, math.log(p / (1 - p)), epsilon)


def log_likelihood(weight: float, bias: float, x, y) -> float:
    """Mean Bernoulli log-likelihood of labels ``y`` (1 = real)."""
    z = weight * np.asarray(x, dtype=float) + bias
    y = np.asarray(y, dtype=float)
    # log sigmoid(z) = -logaddexp(0, -z)
    return float(np.mean(-y * np.logaddexp(0.0, -z) - (1 - y) * np.logaddexp(0.0, z)))


def log_likelihood_gradient(weight: float, bias: float, x, y) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    residual = np.asarray(y, dtype=float) - _sigmoid(weight * x + bias)
    return float(np.mean(residual * x)), float(np.mean(residual))


def fit_discriminator(features, labels, iterations: int = ITERATIONS, step: float = STEP,
                      epsilon: float = EPSILON) -> Discriminator:
    """Full-batch gradient ascent on the logistic log-likelihood.

    Training runs on the standardized feature; the learned weights are then
    mapped back so the model applies to raw features.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if len(x) != len(y) or len(np.unique(y)) < 2:
        raise DegenerateTraining("training set needs both real and spoof examples")
    center = float(x.mean())
    scale = float(x.std())
    if not scale > 0:
        scale = 1.0
    xs = (x - center) / scale

    w = b = 0.0
    history = [log_likelihood(w, b, xs, y)]
    for _ in range(iterations):
        gw, gb = log_likelihood_gradient(w, b, xs, y)
        w += step * gw
        b += step * gb
        history.append(log_likelihood(w, b, xs, y))
    return Discriminator(w / scale, b - w * center / scale, epsilon,
                         tuple(-h for h in history))


def auc(scores_real, scores_spoof) -> float:
    """Area under the ROC curve; ties count one half."""
    real = np.asarray(scores_real, dtype=float)
    spoof = np.asarray(scores_spoof, dtype=float)
    allv = np.concatenate([real, spoof])
    order = np.argsort(allv, kind="mergesort")
    ranks = np.empty(len(allv))
    sorted_v = allv[order]
    i = 0
    while i < len(sorted_v):
        j = i
        while j + 1 < len(sorted_v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    n_r, n_s = len(real), len(spoof)
    return float((ranks[:n_r].sum() - n_r * (n_r + 1) / 2) / (n_r * n_s))


@dataclass(frozen=True)
class ObjectiveReport:
    design: SensingDesign
    j_real: float
    j_spoof: float
    cost_term: float
    objective: float
    auc: float
    beta: float = 0.0

    def at_beta(self, beta: float) -> "ObjectiveReport":
        cost_term = beta * self.design.cost
        return replace(self, beta=beta, cost_term=cost_term,
                       objective=self.j_real + self.j_spoof - cost_term)

    def fields(self, prefix: str = "") -> dict[str, str]:
        p = prefix
        return {
            f"{p}name": self.design.name,
            f"{p}kind": self.design.kind.value,
            f"{p}cost": f"{self.design.cost:.6g}",
            f"{p}j_real": f"{self.j_real:.6f}",
            f"{p}j_spoof": f"{self.j_spoof:.6f}",
            f"{p}cost_term": f"{self.cost_term:.6f}",
            f"{p}objective": f"{self.objective:.6f}",
            f"{p}auc": f"{self.auc:.6f}",
        }


def evaluate_objective(design: SensingDesign, discriminator: Discriminator, eval_real,
                       eval_spoof, beta: float = 0.0) -> ObjectiveReport:
    real = np.asarray(eval_real, dtype=float)
    spoof = np.asarray(eval_spoof, dtype=float)
    if len(real) == 0 or len(spoof) == 0:
        raise ValueError("evaluation sets must be nonempty")
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    p_real = discriminator(real)
    p_spoof = discriminator(spoof)
    j_real = float(np.mean(np.log(p_real)))
    j_spoof = float(np.mean(np.log1p(-p_spoof)))
    cost_term = beta * design.cost
    return ObjectiveReport(design, j_real, j_spoof, cost_term, j_real + j_spoof - cost_term,
                           auc(p_real, p_spoof), beta)


@dataclass(frozen=True)
class Experiment:
    real: ScenePopulation = field(default_factory=ScenePopulation.real)
    spoof: ScenePopulation = field(default_factory=ScenePopulation.spoof)
    train_scenes: int = 100
    eval_scenes: int = 100
    seed: int = 0


def _features(design: SensingDesign, population: ScenePopulation, count: int,
              seed: int, design_index: int, split: int) -> np.ndarray:
    tag = 0 if population.kind is PopulationKind.REAL else 1
    out = np.empty(count)
    for i in range(count):
        scene = sample_scene(population, [seed, split, tag, i])
        try:
            out[i] = observe(scene, design, [seed, split, tag, i, design_index, 7])
        except InsufficientGeometry:
            out[i] = 0.0
    return out


def evaluate_design(design: SensingDesign, experiment: Experiment, beta: float = 0.0,
                    design_index: int = 0) -> tuple[ObjectiveReport, Discriminator]:
    """Train on fresh scenes, then score on a disjoint evaluation draw.

    Scenes depend only on the experiment seed, so every design sees the
    same worlds; only the measurement noise differs.
    """
    e = experiment
    train_r = _features(design, e.real, e.train_scenes, e.seed, design_index, 0)
    train_s = _features(design, e.spoof, e.train_scenes, e.seed, design_index, 0)
    disc = fit_discriminator(np.concatenate([train_r, train_s]),
                             np.r_[np.ones(len(train_r)), np.zeros(len(train_s))])
    eval_r = _features(design, e.real, e.eval_scenes, e.seed, design_index, 1)
    eval_s = _features(design, e.spoof, e.eval_scenes, e.seed, design_index, 1)
    return evaluate_objective(design, disc, eval_r, eval_s, beta), disc


def _rank_key(report: ObjectiveReport):
    return (-report.objective, report.design.cost, report.design.name)


def pick(reports: Sequence[ObjectiveReport]) -> ObjectiveReport:
    """Argmax objective; ties go to lower cost, then name order."""
    if not reports:
        raise ValueError("design menu is empty")
    return min(reports, key=_rank_key)


def select_design(menu: Sequence[SensingDesign], experiment: Experiment, beta: float = 0.0
                  ) -> tuple[SensingDesign, list[ObjectiveReport]]:
    if not menu:
        raise ValueError("design menu is empty")
    reports = [evaluate_design(d, experiment, beta, i)[0] for i, d in enumerate(menu)]
    return pick(reports).design, reports


def beta_sweep(menu: Sequence[SensingDesign], experiment: Experiment, betas: Iterable[float]
               ) -> list[tuple[float, SensingDesign, list[ObjectiveReport]]]:
    """Selection along a beta grid. Each design is trained once; only the
    cost term changes with beta."""
    base = [evaluate_design(d, experiment, 0.0, i)[0] for i, d in enumerate(menu)]
    out = []
    for beta in betas:
        reports = [r.at_beta(beta) for r in base]
        out.append((beta, pick(reports).design, reports))
    return out


# -- experiment config files -----------------------------------------------------

def load_experiment_config(data: bytes | str):
    """Parse an experiment file into ``(menu, experiment, betas)``.

    Keys: ``design.N.{name,kind,cost,baseline,pixel_noise_sigma,
    depth_noise_sigma,focal_px}``, ``real.*`` and ``spoof.*`` population
    fields, ``beta.N``, ``points_per_scene``, ``train_scenes``,
    ``eval_scenes``, ``seed``. Missing sections fall back to defaults.
    """
    fields = grammar.loads(data, strict=False)
    menu = []
    for g in grammar.indexed(fields, "design"):
        menu.append(SensingDesign(
            name=g["name"], kind=DesignKind(g["kind"].lower()), cost=float(g["cost"]),
            baseline=float(g.get("baseline", 0)),
            pixel_noise_sigma=float(g.get("pixel_noise_sigma", 0)),
            depth_noise_sigma=float(g.get("depth_noise_sigma", 0)),
            focal_px=float(g.get("focal_px", DEFAULT_FOCAL)),
        ))
    menu = menu or default_menu()
    pps = int(fields.get("points_per_scene", 64))

    def population(kind: PopulationKind) -> ScenePopulation:
        p = kind.value + "."
        kw = {k[len(p):]: float(v) for k, v in fields.items() if k.startswith(p)}
        return ScenePopulation(kind, points_per_scene=pps, **kw)

    experiment = Experiment(
        real=population(PopulationKind.REAL),
        spoof=population(PopulationKind.SPOOF),
        train_scenes=int(fields.get("train_scenes", 100)),
        eval_scenes=int(fields.get("eval_scenes", 100)),
        seed=int(fields.get("seed", 0)),
    )
    betas = [float(g[""]) for g in grammar.indexed(fields, "beta")] or [0.0]
    return menu, experiment, betas
