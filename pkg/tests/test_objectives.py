import numpy as np
import pytest

from spinctrl.controls import TrigControlParams, sample
from spinctrl.dynamics import PiecewiseControl, SimConfig, hamiltonian_at
from spinctrl.io import load_fixture
from spinctrl.objectives import ObjectiveSpec, OptimResult, TrigObjective, evaluate


def test_zero_controls_concurrence_loss_one():
    spec = ObjectiveSpec("concurrence", SimConfig(2.0, n_steps=100))
    loss, m, psi = evaluate(PiecewiseControl.zeros(100), spec)
    assert (loss, m) == (1.0, 0.0)
    np.testing.assert_allclose(np.abs(psi), [1, 0, 0], atol=1e-15)


def test_bell_state_has_zero_loss_under_both_metrics():
    # start from the Bell state with zero drive: it only picks up a phase
    bell = np.array([0, 1, 0], complex)
    for metric in ("concurrence", "fidelity"):
        loss, m, _ = evaluate(PiecewiseControl.zeros(50), ObjectiveSpec(metric, SimConfig(1.0, 50)), initial=bell)
        assert loss == pytest.approx(0.0, abs=1e-14)


def test_fidelity_table_reaches_target_near_its_horizon():
    params = load_fixture("pso_fidelity")
    best = max(evaluate(sample(params, T, 1000), ObjectiveSpec("fidelity", SimConfig(T)))[1]
               for T in np.arange(2.5, 2.7, 0.01))
    assert best > 0.999


def test_evaluate_is_bitwise_deterministic():
    rng = np.random.default_rng(0)
    ctrl = PiecewiseControl(rng.uniform(-1, 1, 1000), rng.uniform(-1, 1, 1000), 1.0)
    spec = ObjectiveSpec("fidelity", SimConfig(2.4))
    a = evaluate(ctrl, spec)
    b = evaluate(ctrl, spec)
    assert a[0] == b[0] and a[1] == b[1]
    np.testing.assert_array_equal(a[2], b[2])


def test_target_level_validation():
    with pytest.raises(ValueError):
        ObjectiveSpec("fidelity", SimConfig(1.0), target_level=1.0)
    with pytest.raises(ValueError):
        ObjectiveSpec("entropy", SimConfig(1.0))


def test_concurrence_loss_bounded_by_fidelity_loss_near_optimum():
    rng = np.random.default_rng(1)
    hits = 0
    for _ in range(2000):
        eps = rng.uniform(0, 1e-3)
        z = rng.normal(size=3) + 1j * rng.normal(size=3)
        z[1] = 0
        z = z / np.linalg.norm(z) * np.sqrt(eps)
        z[1] = np.sqrt(1 - eps) * np.exp(1j * rng.uniform(0, 6.3))
        bell_spec = ObjectiveSpec("fidelity", SimConfig(1e-9, 1))
        conc_spec = ObjectiveSpec("concurrence", SimConfig(1e-9, 1))
        lf = evaluate(PiecewiseControl.zeros(1), bell_spec, initial=z)[0]
        lc = evaluate(PiecewiseControl.zeros(1), conc_spec, initial=z)[0]
        if 1 - lf >= 0.999:
            hits += 1
            assert lc <= lf + 4 * lf + 1e-12
    assert hits > 1000


def test_trig_objective_batch_matches_single_evaluations():
    spec = ObjectiveSpec("concurrence", SimConfig(2.3))
    obj = TrigObjective(spec)
    X = np.random.default_rng(2).uniform(-1, 1, (5, obj.dim))
    losses = obj(X)
    for i in range(5):
        ref = evaluate(sample(TrigControlParams.from_vector(X[i]), 2.3, 1000), spec)[0]
        assert losses[i] == pytest.approx(ref, abs=1e-12)
        assert obj(X[i]) == pytest.approx(losses[i], abs=1e-13)
    assert obj.n_evaluations == 10
    lo, hi = obj.box
    assert obj.dim == 22 and np.all(lo == -1) and np.all(hi == 1)


def test_result_files(tmp_path):
    spec = ObjectiveSpec("fidelity", SimConfig(1.0, 10))
    ctrl = PiecewiseControl.zeros(10)
    loss, m, psi = evaluate(ctrl, spec)
    res = OptimResult("pso", loss, m, psi, ctrl, TrigControlParams.zeros(), [1.0, 0.5, 0.5])
    rows = res.write_history(tmp_path / "h.csv").read_text().splitlines()
    assert rows == ["iteration,best_loss", "1,1.0", "2,0.5", "3,0.5"]
    assert '"p": 5' in res.write_params(tmp_path / "p.json").read_text()
    assert not res.reached(0.9999)
    assert res.summary()["iterations"] == 3


def test_hamiltonian_used_by_objective_matches_reference():
    # one step with constant controls equals exp(-i H T) applied to |dd>
    from scipy.linalg import expm

    spec = ObjectiveSpec("fidelity", SimConfig(0.7, 1))
    _, m, psi = evaluate(PiecewiseControl([0.6], [-0.4], 1.0), spec)
    ref = expm(-1j * hamiltonian_at(0.6, -0.4) * 0.7)[:, 0]
    np.testing.assert_allclose(psi, ref, atol=1e-12)
    assert m == pytest.approx(abs(ref[1]) ** 2, abs=1e-14)
