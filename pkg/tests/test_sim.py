import numpy as np
import pytest

from oracles import trapezoid

from cascade_adrc.control import ControllerGains
from cascade_adrc.model import CallableDisturbance, PlantModel, ReferenceTrajectory, sine_reference
from cascade_adrc.observer import ObserverGains
from cascade_adrc.sim import (
    NumericAbort,
    ScenarioConfig,
    available_backends,
    integrate_generic,
    run_grid,
    run_scenario,
    scalar_config,
)


def _constant_reference(value, n=1):
    return ReferenceTrajectory(lambda t: np.full(n, value), lambda t: np.zeros(n),
                               lambda t: np.zeros(n), lambda t: np.zeros(n),
                               (abs(value), 0.0, 0.0, 0.0), n)


def _simple_config(model, trajectory, duration=2.0, step=1e-3, **kw):
    return ScenarioConfig(model=model, controller=ControllerGains([1.0], [2.0]),
                          observer=ObserverGains([3.0], [3.0], [1.0]), trajectory=trajectory,
                          duration=duration, step=step, **kw)


def test_equilibrium_has_zero_metrics():
    cfg = _simple_config(PlantModel(np.eye(1), [1.0]), _constant_reference(0.0))
    res = run_scenario(cfg)
    assert res.ISE == 0.0 and res.ISC == 0.0
    assert np.all(res.e1 == 0.0) and np.all(res.e2 == 0.0) and not res.diverged


def test_constant_unit_error_gives_ise_two():
    # q = -u cancels the input, so x1 stays at 0 while the reference sits at 1
    q = CallableDisturbance(1, lambda z1, z2, u, t: -u)
    cfg = _simple_config(PlantModel(np.eye(1), [1.0], q=q), _constant_reference(1.0), record_every=1)
    res = run_scenario(cfg)
    assert np.all(res.e1 == 1.0)
    assert res.ISE == pytest.approx(2.0, rel=1e-12)


def test_ise_matches_trapezoid_of_recorded_series():
    res = run_scenario(scalar_config(duration=1.0, record_every=1))
    assert res.ISE == pytest.approx(trapezoid(res.e1[:, 0] ** 2, 1e-4), rel=1e-12)
    assert res.ISC == pytest.approx(trapezoid(res.v[:, 0] ** 2, 1e-4), rel=1e-12)


def test_initial_observer_state():
    cfg = scalar_config(duration=0.01).replace(x1_0=[0.3])
    res = run_scenario(cfg)
    assert res.z_hat[0, 0] == 0.3 and res.z_hat[0, 1] == 0.0 and res.z_hat[0, 2] == 0.0
    assert res.u[0, 0] == 0.0


def test_step_must_resolve_input_lag():
    with pytest.raises(ValueError, match="time constant"):
        scalar_config(T=0.01, step=1e-4)
    with pytest.raises(ValueError):
        scalar_config(duration=1e-5)


def test_rejection_comparison_T1_omega4():
    on = run_scenario(scalar_config(1.0, 4.0, True))
    off = run_scenario(scalar_config(1.0, 4.0, False))
    assert not off.diverged and np.isfinite(off.ISE)
    # faithful check: fails at kappa = 0.01, see the decisions ledger
    assert on.diverged or on.ISE > 100 * off.ISE


def test_rejection_degrades_T1_omega4_at_larger_kappa():
    on = run_scenario(scalar_config(1.0, 4.0, True, kappa=0.3))
    off = run_scenario(scalar_config(1.0, 4.0, False, kappa=0.3))
    assert not off.diverged
    assert on.diverged or on.ISE > 100 * off.ISE


def test_divergence_truncates_series():
    res = run_scenario(scalar_config(1.0, 4.0, True, kappa=1.0, duration=40.0))
    assert res.diverged
    assert res.t[-1] < 40.0
    state = np.hstack([res.x1, res.x2, res.u, res.z_hat])
    assert np.linalg.norm(state[-1]) > 1e9
    assert np.all(np.linalg.norm(state[:-1], axis=1) <= 1e9)
    assert res.steady_state_sup_zeta_bar == np.inf


def test_nan_aborts_with_sample_index():
    q = CallableDisturbance(1, lambda z1, z2, u, t: np.array([np.nan if t > 0.0495 else 0.0]))
    cfg = _simple_config(PlantModel(np.eye(1), [1.0], q=q), sine_reference(1.0, 1.0))
    with pytest.raises(NumericAbort) as info:
        run_scenario(cfg)
    # the k4 stage of step 49 samples t = 0.05, so the state turns NaN at sample 50
    assert info.value.index == 50
    assert info.value.t == pytest.approx(0.05)


@pytest.fixture(scope="module")
def scalar_grid():
    base = scalar_config(duration=20.0)
    return run_grid(base, [0.1, 1.0], [0.1, 1.0, 4.0], [True, False])


def test_scalar_grid_completes(scalar_grid):
    assert len(scalar_grid) == 12
    assert all(not c.error for c in scalar_grid)
    assert all(np.isfinite(c.result.ISE) and not c.result.diverged for c in scalar_grid)


def test_ise_decreases_with_bandwidth(scalar_grid):
    ise = {c.omega: c.result.ISE for c in scalar_grid if c.T == 0.1 and c.rejection}
    assert ise[4.0] < ise[1.0] < ise[0.1]


def test_certified_cells_respect_bound():
    base = scalar_config(duration=20.0, Qc=1e-6, Qo=1.0)
    cells = run_grid(base, [0.1, 1.0], [0.1, 1.0, 4.0], [True])
    certified = [c for c in cells if c.report is not None and c.report.certified]
    assert certified
    for c in certified:
        assert c.result.steady_state_sup_zeta_bar <= c.report.error_bound


def test_parallel_grid_matches_serial():
    base = scalar_config(duration=2.0)
    a = run_grid(base, [0.1, 1.0], [1.0, 4.0], parallel=1)
    b = run_grid(base, [0.1, 1.0], [1.0, 4.0], parallel=4)
    assert [(c.T, c.omega, c.rejection) for c in a] == [(c.T, c.omega, c.rejection) for c in b]
    for x, y in zip(a, b):
        assert np.array_equal(x.result.x1, y.result.x1) and np.array_equal(x.result.ISE_axes, y.result.ISE_axes)


def test_grid_records_errors_per_cell():
    base = scalar_config(duration=1.0)
    cells = run_grid(base, [0.1, 1e-3], [1.0], [True])
    assert not cells[0].error
    assert cells[1].error.startswith("ValueError")
    with pytest.raises(ValueError):
        run_grid(base, [], [1.0])


def test_runs_are_bit_identical():
    a = run_scenario(scalar_config(duration=2.0))
    b = run_scenario(scalar_config(duration=2.0))
    for name in ("t", "x1", "x2", "u", "v", "z_hat", "ISE_axes", "ISC_axes"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


@pytest.mark.parametrize("T,omega,rejection", [(0.1, 4.0, True), (0.1, 1.0, False), (1.0, 1.0, True)])
def test_step_halving_changes_ise_little(T, omega, rejection):
    coarse = run_scenario(scalar_config(T, omega, rejection, duration=5.0, step=1e-4))
    fine = run_scenario(scalar_config(T, omega, rejection, duration=5.0, step=5e-5, record_every=20))
    assert abs(fine.ISE - coarse.ISE) < 1e-3 * coarse.ISE


def test_metrics_nonnegative_and_monotone_in_horizon():
    short = run_scenario(scalar_config(duration=2.0))
    long = run_scenario(scalar_config(duration=4.0))
    assert 0 <= short.ISE <= long.ISE and 0 <= short.ISC <= long.ISC
    assert np.array_equal(short.x1, long.x1[:len(short.t)])


def test_metrics_additive_over_concatenated_horizons():
    full = run_scenario(scalar_config(duration=4.0))
    first = run_scenario(scalar_config(duration=2.0))
    # restart the second half from the recorded mid-horizon state; the reference is time-shifted
    cfg = scalar_config(duration=2.0)
    k = len(first.t) - 1
    mid_t = first.t[k]
    shifted = ReferenceTrajectory(*(lambda t, j=j: cfg.trajectory.sample(t + mid_t)[j] for j in range(4)),
                                  cfg.trajectory.bounds, 1)
    second_cfg = cfg.replace(trajectory=shifted)
    raw_mid = np.hstack([first.x1[k], first.x2[k], first.u[k], first.z_hat[k]])
    raw = integrate_generic(second_cfg, raw_mid, second_cfg.nsteps)
    assert first.ISE + raw.ise.sum() == pytest.approx(full.ISE, rel=1e-9)
    assert first.ISC + raw.isc.sum() == pytest.approx(full.ISC, rel=1e-9)


@pytest.mark.parametrize("backend", ["python", "generic"])
def test_backends_agree(backend):
    cfg = scalar_config(duration=1.0, record_every=1)
    ref = run_scenario(cfg, available_backends()[0])
    other = run_scenario(cfg, backend)
    assert np.allclose(other.x1, ref.x1, rtol=1e-12, atol=1e-14)
    assert other.ISE == pytest.approx(ref.ISE, rel=1e-12)


@pytest.mark.skipif("compiled" not in available_backends(), reason="extension not built")
def test_compiled_matches_fallback_exactly():
    cfg = scalar_config(duration=1.0)
    a, b = run_scenario(cfg, "compiled"), run_scenario(cfg, "python")
    assert np.array_equal(a.x1, b.x1) and np.array_equal(a.ISE_axes, b.ISE_axes)


def test_custom_components_require_generic_engine():
    q = CallableDisturbance(1, lambda z1, z2, u, t: 0.0 * u)
    cfg = _simple_config(PlantModel(np.eye(1), [1.0], q=q), sine_reference(1.0, 1.0))
    with pytest.raises(ValueError, match="generic"):
        run_scenario(cfg, "python")
    assert run_scenario(cfg).backend == "generic"


def test_trajectory_bounds_hold_along_run():
    res = run_scenario(scalar_config(duration=1.0))
    assert res.trajectory_bound_violations == []


def test_summary_fields():
    res = run_scenario(scalar_config(duration=1.0))
    s = res.summary()
    assert set(s) >= {"ISE", "ISC", "diverged", "steady_state_sup_zeta_bar"}
    assert s["ISE"] == res.ISE and s["diverged"] is False

