import numpy as np
import pytest

from cascade_adrc.model import ParametricDisturbance, PlantModel
from cascade_adrc.observer import (
    ObserverGains,
    build_C0,
    build_Ho,
    initial_estimate,
    observation_error_derivative,
    observer_derivative,
)
from cascade_adrc.sim import run_observer


def test_zero_innovation():
    g = ObserverGains(3.0, 3.0, 1.0)
    zh = initial_estimate([0.7])
    d = observer_derivative(g, zh, [0.7], [0.0], [0.0])
    assert d.tolist() == [0.0, 0.0, 0.0]


def test_pure_innovation():
    g = ObserverGains(3.0, 3.0, 1.0)
    d = observer_derivative(g, np.zeros(3), [1.0], [0.0], [0.0])
    assert d.tolist() == [3.0, 3.0, 1.0]


def test_build_Ho_nominal():
    Ho = build_Ho(ObserverGains(3.0, 3.0, 1.0))
    assert Ho.tolist() == [[-3, 1, 0], [-3, 0, 1], [-1, 0, 0]]
    # (s + 1)^3: a triple root is only resolved to ~cbrt(eps)
    assert np.allclose(np.linalg.eigvals(Ho), -1.0, atol=1e-4)
    assert np.poly(Ho) == pytest.approx([1, 3, 3, 1])


def test_zero_gains_rejected():
    with pytest.raises(ValueError, match="Hurwitz"):
        ObserverGains(0.0, 0.0, 0.0)


def test_observation_error_derivative_cases():
    Ho = build_Ho(ObserverGains(3.0, 3.0, 1.0))
    assert observation_error_derivative(Ho, np.zeros(3), [0.0], [0.0]).tolist() == [0, 0, 0]
    out = observation_error_derivative(Ho, np.zeros(3), [2.0], [0.0])
    assert out.tolist() == [0.0, -2.0, 0.0]
    assert np.array_equal(build_C0(1) @ [2.0], out)


def test_observation_error_matches_simulation():
    # open loop with a sinusoidal input, constant plus sinusoidal disturbance
    q = ParametricDisturbance(1, offset=0.3, amplitude=0.2, frequency=1.5)
    m = PlantModel(np.eye(1), [0.05], q=q)
    g = ObserverGains(30.0, 300.0, 1000.0)
    v = lambda t: np.array([np.sin(2.0 * t)])
    run = run_observer(m, g, 1.0, 1e-4, v=v)
    Ho = build_Ho(g)
    h = run.t[1] - run.t[0]
    worst = 0.0
    for k in range(5, len(run.t) - 5, 97):
        t = run.t[k]
        num = (run.z_tilde[k + 1] - run.z_tilde[k - 1]) / (2 * h)
        # z3 = q here, so z3' = dq/dt; the input error is v - u
        ut = v(t) - run.u[k]
        z3d = q.dt(None, None, None, t)
        ana = observation_error_derivative(Ho, run.z_tilde[k], m.B @ ut, z3d)
        worst = max(worst, np.max(np.abs(num - ana)) / (1 + np.max(np.abs(ana))))
    assert worst < 1e-5


def test_eso_converges_to_constant_disturbance():
    m = PlantModel(np.eye(1), [0.1], q=ParametricDisturbance(1, offset=0.7))
    run = run_observer(m, ObserverGains(30.0, 300.0, 1000.0), 3.0, 1e-4, record_every=100)
    assert abs(run.z_hat[-1, 2] - 0.7) < 1e-6
    assert np.linalg.norm(run.z_tilde[-1]) < 1e-6
