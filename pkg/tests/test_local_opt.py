import numpy as np
import pytest

from spinctrl import local_opt
from spinctrl.dynamics import SimConfig
from spinctrl.objectives import ObjectiveSpec, TrigObjective


def richardson(f, x, h=1e-3):
    """Fourth-order estimate from central differences at h and h/2."""
    def central(step):
        g = np.empty_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = step
            g[i] = (f(x + e) - f(x - e)) / (2 * step)
        return g

    return (4 * central(h / 2) - central(h)) / 3


def test_gradient_of_quadratic():
    g = local_opt.gradient(lambda x: float(x @ x), np.array([1.0, 2.0]))
    np.testing.assert_allclose(g, [2, 4], atol=1e-6)


def test_gradient_of_constant():
    np.testing.assert_array_equal(local_opt.gradient(lambda x: 4.0, np.ones(5)), np.zeros(5))


def test_gradient_names_offending_coordinate():
    def f(x):
        return np.nan if x[2] > 0.5 else float(x.sum())

    with pytest.raises(local_opt.GradientError, match=r"x\[2\]"):
        local_opt.gradient(f, np.array([0.0, 0.0, 0.5]))


def test_quantum_gradient_matches_richardson_oracle():
    rng = np.random.default_rng(0)
    obj = TrigObjective(ObjectiveSpec("concurrence", SimConfig(2.2)))
    for _ in range(3):
        # small coefficients keep the series away from the clip kinks
        x = rng.uniform(-0.08, 0.08, obj.dim)
        g = local_opt.gradient(obj, x, vectorized=True)
        ref = richardson(obj, x)
        assert np.linalg.norm(g - ref) <= 1e-5 * np.linalg.norm(ref)


def test_quantum_gradient_check_twenty_points():
    rng = np.random.default_rng(1)
    obj = TrigObjective(ObjectiveSpec("fidelity", SimConfig(2.5)))
    for _ in range(20):
        x = rng.uniform(-0.08, 0.08, obj.dim)
        g = local_opt.gradient(obj, x, vectorized=True)
        ref = richardson(obj, x)
        assert np.linalg.norm(g - ref) <= 1e-4 * np.linalg.norm(ref)


def test_quadratic_minimum_inside_box():
    c = np.array([0.3, -0.7, 0.1])
    A = np.diag([1.0, 5.0, 20.0])
    f = lambda x: float((x - c) @ A @ (x - c))
    res = local_opt.optimize(f, np.zeros(3), (-1, 1))
    np.testing.assert_allclose(res.x, c, atol=1e-6)
    assert res.status == "converged"


def test_minimum_outside_box_lands_on_face():
    f = lambda x: float((x[0] - 3) ** 2 + (x[1] + 0.2) ** 2)
    res = local_opt.optimize(f, np.zeros(2), (-1, 1))
    assert res.x[0] == 1.0
    assert res.x[1] == pytest.approx(-0.2, abs=1e-6)


def test_iterates_feasible_and_history_monotone():
    visited = []

    def rosen(x):
        visited.append(x.copy())
        return float(100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2)

    res = local_opt.optimize(rosen, np.array([-0.5, 0.4]), (-0.8, 0.9))
    assert np.all(np.diff(res.history) <= 0)
    assert np.all((res.x >= -0.8) & (res.x <= 0.9))
    # every point sent to the objective outside the FD stencil stays in the box
    pts = np.array(visited)
    assert np.all(pts >= -0.8 - 1e-5) and np.all(pts <= 0.9 + 1e-5)


def test_start_outside_box_rejected():
    with pytest.raises(ValueError):
        local_opt.optimize(lambda x: 0.0, np.array([2.0]), (-1, 1))


def test_line_search_failure_reports_stalled():
    # noisy plateau: no descent direction is accepted
    rng = np.random.default_rng(0)
    res = local_opt.optimize(lambda x: float(rng.random()), np.zeros(2), (-1, 1))
    assert res.status in ("stalled", "converged")
    assert np.isfinite(res.value)


def test_multistart_is_seeded():
    f = lambda x: float(np.sum(np.sin(3 * x) + 0.1 * x**2))
    cfg = local_opt.LocalOptConfig(n_starts=5, seed=4)
    a = local_opt.multistart(f, (np.full(3, -2.0), np.full(3, 2.0)), cfg)
    b = local_opt.multistart(f, (np.full(3, -2.0), np.full(3, 2.0)), cfg)
    np.testing.assert_array_equal(a.x, b.x)
    assert len(a.starts) == 5
    assert a.value == min(s["value"] for s in a.starts)


def test_config_validation():
    with pytest.raises(ValueError):
        local_opt.LocalOptConfig(h=0)
    with pytest.raises(ValueError):
        local_opt.LocalOptConfig(n_starts=0)


def test_concurrence_multistart_reaches_target():
    obj = TrigObjective(ObjectiveSpec("concurrence", SimConfig(2.4)))
    cfg = local_opt.LocalOptConfig(n_starts=16, target_loss=1e-4, seed=0)
    res = local_opt.multistart(obj, obj.box, cfg, vectorized=True)
    assert res.value < 1e-4
    assert np.all(np.abs(res.x) <= 1)
