import numpy as np
import pytest

from tsrobust import attacks as atk
from tsrobust.attacks import ThreatBudget
from tsrobust.errors import ConfigError

from linear import (
    LabelOnlyModel,
    LinearSoftmaxModel,
    ProbabilityOnlyModel,
    binary_margin_model,
)
from oracles import corner_worst_loss, simba_exhaustive


def budget(eps):
    return ThreatBudget(epsilon=eps)


def assert_within_budget(result, eps):
    assert result.linf_norm <= eps + atk.LINF_SLACK


def results_equal(a, b):
    return (
        np.array_equal(a.x_adv, b.x_adv)
        and a.success == b.success
        and a.queries == b.queries
        and a.loss == b.loss
    )


# ---------------------------------------------------------------------------
# threat budget


def test_budget_rejects_l2():
    with pytest.raises(ConfigError):
        ThreatBudget(epsilon=0.1, norm="l2")


# ---------------------------------------------------------------------------
# noise attack


def test_noise_zero_epsilon():
    model = binary_margin_model([1.0, 1.0], c=1.0)
    x = np.array([1.0, 1.0])  # margin 3 > 0 -> class 0
    res = atk.noise_attack(model, x, 0, budget(0.0), n=20, seed=1)
    assert np.array_equal(res.x_adv, x)
    assert not res.success
    res_mis = atk.noise_attack(model, x, 1, budget(0.0), n=20, seed=1)
    assert res_mis.success  # model predicts 0 != claimed label 1


def test_noise_deterministic():
    model = binary_margin_model([2.0, -1.0])
    x = np.array([0.3, 0.4])
    a = atk.noise_attack(model, x, 0, budget(0.5), n=50, seed=9)
    b = atk.noise_attack(model, x, 0, budget(0.5), n=50, seed=9)
    assert results_equal(a, b)
    assert a.queries == 50


def test_noise_success_rate_matches_monte_carlo_oracle():
    model = binary_margin_model([1.0, 1.0], c=-0.4)
    x = np.array([0.3, 0.3])  # margin 0.2, flips when u1+u2 < -0.2
    eps = 0.5
    rng = np.random.default_rng(123)
    draws = rng.uniform(-eps, eps, size=(10000, 2))
    p = np.mean([model.predict(x + u).label != 0 for u in draws])
    trials = 400
    hits = sum(
        atk.noise_attack(model, x, 0, budget(eps), n=1, seed=s).success
        for s in range(trials)
    )
    rate = hits / trials
    se = np.sqrt(p * (1 - p)) * (1 / np.sqrt(trials) + 1 / np.sqrt(10000))
    assert abs(rate - p) <= 3 * se


# ---------------------------------------------------------------------------
# FGSM


@pytest.mark.parametrize("d", [2, 4, 7, 10])
def test_fgsm_single_restart_matches_corner_oracle(d):
    rng = np.random.default_rng(d)
    w = rng.normal(size=d)
    w[np.abs(w) < 0.1] += 0.2  # keep coordinates informative
    model = binary_margin_model(w, c=0.3)
    x = rng.normal(size=d) * 0.1
    eps = 0.4
    res = atk.fgsm(model, x, 0, budget(eps), restarts=1, seed=0)
    worst = corner_worst_loss(lambda v: model.ce_loss(v, 0), x, eps)
    assert abs(res.loss - worst) < 1e-9
    assert_within_budget(res, eps)


def test_fgsm_zero_epsilon_returns_original():
    model = binary_margin_model([1.0, -2.0])
    x = np.array([0.5, 0.5])
    res = atk.fgsm(model, x, 0, budget(0.0), restarts=3, seed=2)
    assert np.array_equal(res.x_adv, x)


def test_fgsm_restart_dominance():
    rng = np.random.default_rng(42)
    model = LinearSoftmaxModel(rng.normal(size=(3, 4)), rng.normal(size=3))
    x = rng.normal(size=4)
    single = atk.fgsm(model, x, 0, budget(0.2), restarts=1, seed=5)
    many = atk.fgsm(model, x, 0, budget(0.2), restarts=100, seed=5)
    assert many.loss >= single.loss - 1e-12


def test_fgsm_deterministic():
    model = binary_margin_model([1.0, 2.0, -1.0])
    x = np.array([0.1, 0.2, 0.3])
    a = atk.fgsm(model, x, 0, budget(0.3), restarts=10, seed=3)
    b = atk.fgsm(model, x, 0, budget(0.3), restarts=10, seed=3)
    assert results_equal(a, b)


# ---------------------------------------------------------------------------
# PGD


@pytest.mark.parametrize("steps", [1, 3, 10, 50])
def test_pgd_matches_corner_oracle_any_step_count(steps):
    rng = np.random.default_rng(steps)
    d = 6
    w = rng.normal(size=d)
    w[np.abs(w) < 0.1] += 0.2
    model = binary_margin_model(w, c=0.2)
    x = rng.normal(size=d) * 0.1
    eps = 0.3
    res = atk.pgd(model, x, 0, budget(eps), restarts=2, steps=steps, seed=1)
    worst = corner_worst_loss(lambda v: model.ce_loss(v, 0), x, eps)
    assert abs(res.loss - worst) < 1e-9
    assert_within_budget(res, eps)
    assert res.queries == 2 * steps


def test_pgd_zero_epsilon_returns_original():
    model = binary_margin_model([1.0, -1.0])
    x = np.array([0.4, 0.1])
    res = atk.pgd(model, x, 0, budget(0.0), restarts=2, steps=5, seed=7)
    assert np.array_equal(res.x_adv, x)


def test_pgd_deterministic():
    rng = np.random.default_rng(77)
    model = LinearSoftmaxModel(rng.normal(size=(3, 5)), rng.normal(size=3))
    x = rng.normal(size=5)
    a = atk.pgd(model, x, 1, budget(0.25), restarts=3, steps=8, seed=11)
    b = atk.pgd(model, x, 1, budget(0.25), restarts=3, steps=8, seed=11)
    assert results_equal(a, b)


# ---------------------------------------------------------------------------
# boundary attack


def test_boundary_converges_to_line_distance():
    w = np.array([1.0, -1.0])
    c = -0.5
    model = binary_margin_model(w, c=c)  # boundary: x1 - x2 = 0.5
    x = np.array([1.0, 0.2])
    assert model.predict(x).label == 0
    exact = abs(w @ x + c) / np.linalg.norm(w)
    res = atk.boundary_attack(
        LabelOnlyModel(model), x, 0, budget(10.0), iterations=2000, seed=3
    )
    assert res.success
    assert res.l2_norm <= exact * 1.05
    assert res.l2_norm >= exact - 1e-9  # cannot beat the analytic distance
    assert model.predict(res.x_adv).label != 0


def test_boundary_label_only_access():
    # LabelOnlyModel raises on any probability or gradient read
    model = LabelOnlyModel(binary_margin_model([1.0, -1.0], c=-0.5))
    res = atk.boundary_attack(model, np.array([1.0, 0.2]), 0, budget(10.0),
                              iterations=100, seed=0)
    assert res.queries > 0


def test_boundary_over_budget_downgraded():
    model = binary_margin_model([1.0, -1.0], c=-0.5)
    x = np.array([5.0, 0.0])  # far from the boundary
    res = atk.boundary_attack(LabelOnlyModel(model), x, 0, budget(0.01),
                              iterations=200, seed=4)
    assert not res.success
    assert res.linf_norm > 0.01


def test_boundary_init_cap_exhausted():
    # constant prediction: no misclassified starting point exists
    model = LinearSoftmaxModel(np.zeros((2, 2)), np.array([1.0, 0.0]))
    res = atk.boundary_attack(LabelOnlyModel(model), np.array([0.2, 0.4]), 0,
                              budget(1.0), iterations=50, seed=5, init_cap=50)
    assert not res.success
    assert res.queries == 50


def test_boundary_deterministic():
    model = LabelOnlyModel(binary_margin_model([1.0, -1.0], c=-0.5))
    x = np.array([1.0, 0.2])
    a = atk.boundary_attack(model, x, 0, budget(1.0), iterations=300, seed=6)
    b = atk.boundary_attack(model, x, 0, budget(1.0), iterations=300, seed=6)
    assert results_equal(a, b)


# ---------------------------------------------------------------------------
# SIMBA


def test_simba_untouched_coordinates_have_zero_perturbation():
    rng = np.random.default_rng(8)
    model = LinearSoftmaxModel(rng.normal(size=(3, 6)), rng.normal(size=3))
    x = rng.normal(size=6)
    y = model.predict(x).label
    res = atk.simba(ProbabilityOnlyModel(model), x, y, budget(0.05), seed=1)
    delta = res.x_adv - x
    assert res.l0_norm == np.count_nonzero(delta)
    assert np.allclose(np.abs(delta[delta != 0]), 0.05)


def test_simba_probability_decreases():
    w = np.array([1.0, -2.0, 3.0])
    model = binary_margin_model(w, c=5.0)  # huge margin: never flips
    x = np.zeros(3)
    res = atk.simba(model, x, 0, budget(0.3), seed=2)
    assert not res.success
    assert model.predict(res.x_adv).probs[0] < model.predict(x).probs[0]


def test_simba_matches_exhaustive_assignment_oracle():
    w = np.array([1.0, -2.0, 3.0])
    model = binary_margin_model(w, c=5.0)  # no flip: all coordinates visited
    x = np.array([0.1, -0.2, 0.3])
    eps = 0.25
    res = atk.simba(model, x, 0, budget(eps), seed=3)
    oracle = simba_exhaustive(lambda v: model.predict(v).probs, x, 0, eps)
    assert np.allclose(res.x_adv, oracle)


def test_simba_early_stop_on_flip():
    model = binary_margin_model([1.0, 1.0], c=-0.05)
    x = np.array([0.1, 0.1])  # margin 0.15; one -0.2 step flips
    res = atk.simba(model, x, 0, budget(0.2), seed=4)
    assert res.success
    assert model.predict(res.x_adv).label != 0
    assert res.l0_norm <= 2


def test_simba_already_misclassified():
    model = binary_margin_model([1.0, 0.5])
    x = np.array([1.0, 1.0])  # predicted 0
    res = atk.simba(model, x, 1, budget(0.1), seed=5)
    assert res.success
    assert res.queries == 1
    assert np.array_equal(res.x_adv, x)


def test_simba_deterministic():
    rng = np.random.default_rng(13)
    model = LinearSoftmaxModel(rng.normal(size=(4, 5)), rng.normal(size=4))
    x = rng.normal(size=5)
    a = atk.simba(model, x, 0, budget(0.1), seed=6)
    b = atk.simba(model, x, 0, budget(0.1), seed=6)
    assert results_equal(a, b)


# ---------------------------------------------------------------------------
# cross-attack properties


def test_budget_soundness_randomized():
    rng = np.random.default_rng(99)
    for trial in range(40):
        d = int(rng.integers(2, 6))
        model = LinearSoftmaxModel(rng.normal(size=(3, d)), rng.normal(size=3))
        x = rng.normal(size=d)
        y = int(rng.integers(0, 3))
        eps = float(rng.uniform(0.05, 0.5))
        b = budget(eps)
        for res in (
            atk.noise_attack(model, x, y, b, n=5, seed=trial),
            atk.fgsm(model, x, y, b, restarts=3, seed=trial),
            atk.pgd(model, x, y, b, restarts=2, steps=4, seed=trial),
            atk.simba(model, x, y, b, seed=trial),
        ):
            assert_within_budget(res, eps)
            assert res.success == (model.predict(res.x_adv).label != y)
        bres = atk.boundary_attack(LabelOnlyModel(model), x, y, b,
                                   iterations=30, seed=trial, init_cap=100)
        if bres.success:
            assert_within_budget(bres, eps)


def test_attacks_target_original_label_not_prediction():
    # misclassified example: the attack must not "fix" it
    model = binary_margin_model([1.0, 1.0], c=0.0)
    x = np.array([0.5, 0.5])  # predicted class 0
    y = 1  # ground truth differs
    for res in (
        atk.noise_attack(model, x, y, budget(0.1), n=10, seed=0),
        atk.fgsm(model, x, y, budget(0.1), restarts=2, seed=0),
        atk.pgd(model, x, y, budget(0.1), restarts=1, steps=3, seed=0),
    ):
        # maximizing loss against y keeps the example misclassified
        assert model.predict(res.x_adv).label != y
        assert res.success
