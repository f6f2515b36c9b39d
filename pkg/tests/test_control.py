import numpy as np
import pytest

from cascade_adrc.control import (
    CompensationMode,
    ControllerGains,
    compensation,
    control_derivative_analytic,
    control_rate_check,
    feedback,
    hu_rate,
)
from cascade_adrc.model import PlantModel, TanhFriction, sine_reference
from cascade_adrc.sim import run_scenario, scalar_config


def ref(xd=0.0, xdd=0.0, xddd=0.0):
    return [np.array([xd]), np.array([xdd]), np.array([xddd])]


def test_homogeneous_feedback_is_zero():
    m = PlantModel(np.eye(1), [0.1])
    out = feedback(ControllerGains(1.0, 2.0), m, ref(), [0.0], [0.0], [0.0])
    assert out.v.tolist() == [0.0]


def test_proportional_action():
    m = PlantModel(np.eye(1), [0.1])
    out = feedback(ControllerGains(1.0, 2.0), m, ref(1.0), [0.0], [0.0], [0.0])
    assert out.v.tolist() == [1.0]


def test_disturbance_rejection_uses_B_inverse():
    m = PlantModel(2.0 * np.eye(1), [0.1])
    out = feedback(ControllerGains(1.0, 2.0), m, ref(), [0.0], [0.0], [0.5])
    assert out.v[0] == pytest.approx(-0.25)
    off = feedback(ControllerGains(1.0, 2.0, rejection_enabled=False), m, ref(), [0.0], [0.0], [0.5])
    assert off.v.tolist() == [0.0]


def test_compensation_modes():
    m = PlantModel(np.eye(1), [0.1], h1=TanhFriction(0.5, 10.0), h2=TanhFriction(0.1, 1.0))
    xd, xdd, z1, z2 = [0.0], [0.3], [0.0], [-0.2]
    assert compensation("none", m, xd, xdd, z1, z2).tolist() == [0.0]
    ref_based = compensation("reference_based", m, xd, xdd, z1, z2)
    assert ref_based[0] == pytest.approx(0.5 * np.tanh(3.0) + 0.1 * np.tanh(0.3))
    est = compensation(CompensationMode.ESTIMATE_BASED, m, xd, xdd, z1, z2)
    assert est[0] == pytest.approx(0.5 * np.tanh(-2.0) + 0.1 * np.tanh(0.3))


def test_gains_must_be_positive():
    with pytest.raises(ValueError):
        ControllerGains(0.0, 1.0)
    with pytest.raises(ValueError):
        ControllerGains(1.0, 1.0, "bogus")


def test_vdot_zero_state(nominal):
    out = control_derivative_analytic(nominal, np.zeros(2), np.zeros(3), 2.0, 0.5, [0.0], [0.0], np.eye(1))
    assert out.tolist() == [0.0]


def test_vdot_hand_computed(nominal):
    out = control_derivative_analytic(nominal, [1.0, 0.0], np.zeros(3), 1.0, 1.0, [0.0], [0.0], np.eye(1))
    assert out[0] == pytest.approx(-2.0)


def test_hu_rate_matches_finite_difference():
    # estimate-based compensation along a recorded run: h_u(t) differentiated numerically
    m = PlantModel(np.eye(1), [0.1], h1=TanhFriction(-0.5, 10.0))
    base = scalar_config(T=0.1, omega=1.0, duration=0.5, record_every=1)
    cfg = base.replace(model=m, controller=ControllerGains(base.controller.Kp, base.controller.Kd,
                                                           "estimate_based", True))
    r = run_scenario(cfg)
    from cascade_adrc.scaling import scaled_error_derivatives

    h = cfg.step
    worst = 0.0
    for k in range(10, len(r.t) - 10, 101):
        num = (r.h_u[k - 2] - 8 * r.h_u[k - 1] + 8 * r.h_u[k + 1] - r.h_u[k + 2]) / (12 * h)
        z = r.zeta_bar[k]
        e_dot, z_dot = scaled_error_derivatives(cfg.scaled, z[:2], z[2:5], z[5:], [0.0], cfg.omega,
                                                cfg.kappa, m.B)
        ana = hu_rate("estimate_based", m, cfg.trajectory.sample(r.t[k]), r.z_hat[k], e_dot, z_dot,
                      cfg.omega, cfg.kappa, r.t[k])
        worst = max(worst, float(np.abs(num - ana)[0]) / (1 + float(np.abs(ana)[0])))
    assert worst < 1e-4


@pytest.mark.parametrize("mode", ["none", "reference_based", "estimate_based"])
def test_vdot_matches_simulation(nominal, mode):
    m = PlantModel(np.eye(1), [0.1], h1=TanhFriction(-0.5, 10.0))
    base = scalar_config(T=0.1, omega=1.0, duration=0.5, record_every=1)
    cfg = base.replace(model=m, controller=ControllerGains(base.controller.Kp, base.controller.Kd, mode, True))
    res = control_rate_check(run_scenario(cfg), nominal, m)
    assert res["max_relative"] < 1e-4
