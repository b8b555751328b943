import math

import numpy as np
import pytest
from oracles import uniform_depth_score

from realseal.errors import DegenerateTraining
from realseal.sensing import (
    EPSILON,
    DesignKind,
    Discriminator,
    Experiment,
    ScenePopulation,
    SensingDesign,
    auc,
    beta_sweep,
    default_menu,
    evaluate_design,
    evaluate_objective,
    fit_discriminator,
    load_experiment_config,
    log_likelihood,
    log_likelihood_gradient,
    observe,
    pick,
    sample_scene,
    select_design,
)


def direct_score(pts):
    """Smallest principal variance of the world points over their mean
    depth (the stereo rig's first camera sits at the world origin)."""
    centered = pts - pts.mean(axis=0)
    lam = np.linalg.eigvalsh(centered.T @ centered / len(pts))[0]
    return np.sqrt(max(lam, 0.0)) / pts[:, 2].mean()


MONO = SensingDesign("mono", DesignKind.MONO, cost=1.0)
STEREO = SensingDesign("stereo", DesignKind.STEREO, cost=2.0, baseline=1.0)
SMALL = Experiment(train_scenes=40, eval_scenes=40, seed=11)


class TestTypes:
    def test_negative_cost(self):
        with pytest.raises(ValueError):
            SensingDesign("x", DesignKind.MONO, cost=-1)

    def test_stereo_needs_baseline(self):
        with pytest.raises(ValueError):
            SensingDesign("x", DesignKind.STEREO, cost=1)

    def test_real_needs_halfwidth(self):
        with pytest.raises(ValueError):
            ScenePopulation.real(depth_halfwidth=0)

    def test_default_menu_costs(self):
        costs = {d.kind: d.cost for d in default_menu()}
        assert costs == {DesignKind.MONO: 1, DesignKind.STEREO: 2,
                         DesignKind.STEREO_WIDE: 2.5, DesignKind.DEPTH_SENSOR: 4}


class TestSampleScene:
    def test_flat_spoof(self):
        pts = sample_scene(ScenePopulation.spoof(plane_depth=3.0), 0)
        assert np.all(pts[:, 2] == 3.0)

    def test_real_support(self):
        pts = sample_scene(ScenePopulation.real(points_per_scene=10_000), 1)
        assert pts[:, 2].min() >= 4 and pts[:, 2].max() <= 6

    def test_deterministic(self):
        pop = ScenePopulation.spoof(perturbation_sigma=0.1)
        np.testing.assert_array_equal(sample_scene(pop, 5), sample_scene(pop, 5))
        assert not np.array_equal(sample_scene(pop, 5), sample_scene(pop, 6))


class TestObserve:
    def test_stereo_flat(self):
        assert observe(sample_scene(ScenePopulation.spoof(), 0), STEREO, 0) <= 1e-9

    def test_mono_constant(self):
        assert observe(sample_scene(ScenePopulation.real(), 0), MONO, 0) == 0.0

    def test_stereo_real(self):
        scenes = [sample_scene(ScenePopulation.real(), s) for s in range(40)]
        for s, pts in enumerate(scenes):
            assert observe(pts, STEREO, s) == pytest.approx(direct_score(pts), abs=1e-9)
        scores = [observe(pts, STEREO, s) for s, pts in enumerate(scenes)]
        assert np.mean(scores) == pytest.approx(0.11, abs=0.015)

    def test_stereo_real_large_sample(self):
        pts = sample_scene(ScenePopulation.real(points_per_scene=5000), 0)
        assert observe(pts, STEREO, 0) == pytest.approx(uniform_depth_score(5, 1), abs=0.005)

    def test_depth_sensor(self):
        d = SensingDesign("d", DesignKind.DEPTH_SENSOR, cost=4, depth_noise_sigma=0.0)
        assert observe(sample_scene(ScenePopulation.spoof(), 0), d, 0) <= 1e-12
        assert observe(sample_scene(ScenePopulation.real(), 0), d, 0) > 0.05


class TestDiscriminator:
    def test_outputs_clamped(self):
        d = Discriminator(1e6, 0.0)
        out = d(np.array([-1.0, 1.0]))
        assert out[0] == EPSILON and out[1] == 1 - EPSILON

    def test_separable(self):
        x = np.r_[np.ones(50), np.zeros(50)]
        y = np.r_[np.ones(50), np.zeros(50)]
        d = fit_discriminator(x, y)
        assert np.mean((d(x) > 0.5) == (y == 1)) == 1.0

    def test_single_class(self):
        with pytest.raises(DegenerateTraining):
            fit_discriminator([0.1, 0.2], [1, 1])

    def test_loss_non_increasing(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = np.r_[rng.normal(1, 1, 30), rng.normal(0, 1, 30)] * rng.uniform(0.01, 10)
            y = np.r_[np.ones(30), np.zeros(30)]
            h = np.array(fit_discriminator(x, y).loss_history)
            assert len(h) == 501
            assert np.all(np.diff(h) <= 1e-12)

    def test_deterministic(self):
        x, y = [0.1, 0.3, 0.2, 0.5], [0, 1, 0, 1]
        assert fit_discriminator(x, y) == fit_discriminator(x, y)

    @pytest.mark.parametrize("w,b", [(0.0, 0.0), (1.3, -0.4), (-2.0, 0.7)])
    def test_gradient_finite_difference(self, w, b):
        rng = np.random.default_rng(1)
        x = rng.normal(size=50)
        y = (rng.uniform(size=50) < 0.5).astype(float)
        gw, gb = log_likelihood_gradient(w, b, x, y)
        h = 1e-5
        fw = (log_likelihood(w + h, b, x, y) - log_likelihood(w - h, b, x, y)) / (2 * h)
        fb = (log_likelihood(w, b + h, x, y) - log_likelihood(w, b - h, x, y)) / (2 * h)
        assert abs(gw - fw) <= 1e-6 * max(1.0, abs(fw))
        assert abs(gb - fb) <= 1e-6 * max(1.0, abs(fb))

    def test_mono_chance(self):
        e = Experiment(train_scenes=100, eval_scenes=1000, seed=3)
        rep, _ = evaluate_design(MONO, e)
        assert 0.45 <= rep.auc <= 0.55


class TestAuc:
    def test_perfect(self):
        assert auc([2, 3], [0, 1]) == 1.0

    def test_ties(self):
        assert auc([1, 1], [1, 1]) == 0.5

    def test_matches_pairwise(self):
        rng = np.random.default_rng(2)
        r, s = rng.integers(0, 5, 30), rng.integers(0, 5, 25)
        pairwise = np.mean([(a > b) + 0.5 * (a == b) for a in r for b in s])
        assert auc(r, s) == pytest.approx(pairwise, abs=1e-12)


class TestObjective:
    def test_chance(self):
        rep = evaluate_objective(STEREO, Discriminator.constant(0.5), [0.1, 0.2], [0.0, 0.3])
        assert rep.objective == pytest.approx(2 * math.log(0.5), abs=1e-12)

    def test_perfect(self):
        d = Discriminator(1e6, -0.5e6)
        rep = evaluate_objective(STEREO, d, [1.0] * 5, [0.0] * 5)
        assert rep.objective == pytest.approx(2 * math.log(1 - EPSILON), abs=1e-15)
        assert abs(rep.objective) <= 2 * EPSILON * (1 + EPSILON)

    def test_perfect_with_cost(self):
        d = Discriminator(1e6, -0.5e6)
        rep = evaluate_objective(STEREO, d, [1.0], [0.0], beta=0.5)
        assert rep.objective == pytest.approx(-1.0, abs=1e-5)
        assert rep.cost_term == 1.0

    def test_sign_invariants(self):
        rng = np.random.default_rng(3)
        rep = evaluate_objective(STEREO, Discriminator(3.0, -1.0), rng.normal(size=20),
                                 rng.normal(size=20), beta=0.1)
        assert rep.j_real <= 0 and rep.j_spoof <= 0 and rep.objective <= 0

    def test_permutation_invariant(self):
        rng = np.random.default_rng(4)
        r, s = rng.normal(size=50), rng.normal(size=50)
        d = Discriminator(2.0, 0.3)
        a = evaluate_objective(STEREO, d, r, s).objective
        b = evaluate_objective(STEREO, d, rng.permutation(r), rng.permutation(s)).objective
        assert a == pytest.approx(b, abs=1e-12)

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            evaluate_objective(STEREO, Discriminator.constant(0.5), [], [1.0])
        with pytest.raises(ValueError):
            evaluate_objective(STEREO, Discriminator.constant(0.5), [1.0], [1.0], beta=-1)


class TestSelect:
    def test_stereo_wins_at_zero_beta(self):
        best, reports = select_design([MONO, STEREO], SMALL, 0.0)
        assert best == STEREO
        by = {r.design.name: r for r in reports}
        assert by["stereo"].objective > -0.05
        assert by["mono"].objective == pytest.approx(2 * math.log(0.5), abs=0.01)
        assert by["stereo"].objective - by["mono"].objective >= 1.0

    def test_mono_wins_at_large_beta(self):
        best, _ = select_design([MONO, STEREO], SMALL, 10.0)
        assert best == MONO

    def test_single_design(self):
        assert select_design([STEREO], SMALL)[0] == STEREO

    def test_empty_menu(self):
        with pytest.raises(ValueError):
            select_design([], SMALL)

    def test_tie_break(self):
        a = SensingDesign("b", DesignKind.MONO, cost=1.0)
        b = SensingDesign("a", DesignKind.MONO, cost=1.0)
        c = SensingDesign("c", DesignKind.MONO, cost=0.5)
        reps = [evaluate_objective(d, Discriminator.constant(0.5), [0.0], [0.0]) for d in (a, b)]
        assert pick(reps).design.name == "a"
        reps.append(evaluate_objective(c, Discriminator.constant(0.5), [0.0], [0.0]))
        assert pick(reps).design.name == "c"

    def test_beta_sweep_cost_monotone(self):
        menu = default_menu(pixel_noise_sigma=0.0, depth_noise_sigma=0.0)
        sweep = beta_sweep(menu, SMALL, [0, 0.1, 0.5, 1, 5, 10])
        costs = [best.cost for _, best, _ in sweep]
        assert all(b <= a for a, b in zip(costs, costs[1:]))
        assert sweep[-1][1].kind is DesignKind.MONO

    def test_better_spoofs_are_harder(self):
        medians = []
        for sigma in (0.0, 0.1, 0.3, 0.6):
            spoof = ScenePopulation.spoof(perturbation_sigma=sigma)
            aucs = [evaluate_design(STEREO, Experiment(spoof=spoof, train_scenes=20,
                                                       eval_scenes=20, seed=s))[0].auc
                    for s in range(20)]
            medians.append(np.median(aucs))
        assert all(b <= a + 1e-12 for a, b in zip(medians, medians[1:]))


def test_load_experiment_config():
    text = """
    # small menu
    design.0.name = mono
    design.0.kind = Mono
    design.0.cost = 1
    design.1.name = stereo
    design.1.kind = stereo
    design.1.cost = 2
    design.1.baseline = 1
    spoof.perturbation_sigma = 0.05
    real.depth_halfwidth = 0.5
    beta.0 = 0
    beta.1 = 2
    train_scenes = 10
    seed = 4
    """
    menu, exp, betas = load_experiment_config(text)
    assert [d.name for d in menu] == ["mono", "stereo"]
    assert menu[1].baseline == 1.0
    assert exp.spoof.perturbation_sigma == 0.05
    assert exp.real.depth_halfwidth == 0.5
    assert exp.train_scenes == 10 and exp.seed == 4 and exp.eval_scenes == 100
    assert betas == [0.0, 2.0]


def test_empty_config_uses_defaults():
    menu, exp, betas = load_experiment_config("")
    assert len(menu) == 4 and exp == Experiment() and betas == [0.0]
