"""Two-axis telescope mount driven through PI current loops.

The position loop computes a desired torque; the current reference is that
torque divided by the motor torque constant, and a saturated PI regulator
with anti-windup drives a unit first-order electrical lag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..control import CompensationMode, ControllerGains
from ..model import ParametricDisturbance, PlantModel, TanhFriction, sine_reference
from ..observer import ObserverGains
from .scenario import CurrentLoopConfig, ScenarioConfig, ScenarioResult, run_scenario

SIDEREAL_RATE = 7.268e-5
TRAJECTORY_PERIOD = 30.0
FRICTION_STEEPNESS = 1e3
B_TELESCOPE = np.diag([1.0 / 5.0, 1.0 / 30.0])
TELESCOPE_GAINS = {
    "K1": [1.2e3, 2.4e2],
    "K2": [5.7e5, 2.28e4],
    "K3": [1e8, 0.8e6],
    "Kp": [225.0, 225.0],
    "Kd": [24.0, 24.0],
}


def sat(x, limit):
    """Symmetric saturation ``clip(x, -limit, limit)``."""
    if limit <= 0:
        raise ValueError("saturation limit must be positive")
    return np.clip(x, -limit, limit)


def current_loop_derivative(loop: CurrentLoopConfig, current, integrator, i_desired):
    """Return ``(di/dt, ds/dt, pre_saturation_voltage, applied_voltage)``."""
    it = i_desired - current
    pre = loop.k_p * it + integrator + loop.feedforward_gain * i_desired
    out = sat(pre, loop.U_m)
    di = (out - current) / loop.electrical_time_constant
    ds = loop.k_i * (it - loop.k_s * (pre - out))
    return di, ds, pre, out


def simulate_current_loop(loop: CurrentLoopConfig, i_desired: Callable[[float], float], duration: float,
                          step: float = 1e-5):
    """RK4 run of a single current loop; returns ``(t, current, integrator, saturated)``."""
    N = max(1, int(round(duration / step)))
    y = np.zeros(2)

    def f(t, y):
        di, ds, _, _ = current_loop_derivative(loop, y[0], y[1], i_desired(t))
        return np.array([di, ds])

    ts = np.arange(N + 1) * step
    out = np.empty((N + 1, 2))
    satf = np.zeros(N + 1, dtype=bool)
    for k in range(N + 1):
        out[k] = y
        _, _, pre, o = current_loop_derivative(loop, y[0], y[1], i_desired(ts[k]))
        satf[k] = pre != o
        if k == N:
            break
        t = ts[k]
        k1 = f(t, y)
        k2 = f(t + step / 2, y + step / 2 * k1)
        k3 = f(t + step / 2, y + step / 2 * k2)
        k4 = f(t + step, y + step * k3)
        y = y + step / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return ts, out[:, 0], out[:, 1], satf


def telescope_config(speed_multiple: float, friction_coefficient, compensation_mode="none",
                     true_friction_coefficient=None, friction_schedule=None,
                     loop: Optional[CurrentLoopConfig] = None, duration: float = TRAJECTORY_PERIOD,
                     step: float = 1e-4, record_every: int = 10, gains: Optional[dict] = None,
                     name: str = "") -> ScenarioConfig:
    """Two-axis mount tracking a 30 s sine with peak speed ``speed_multiple`` sidereal rates.

    ``friction_coefficient`` is the signed coefficient of the friction model
    used for compensation (negative values oppose the motion).  The true
    friction defaults to the same model; a different
    ``true_friction_coefficient`` enters the unknown disturbance as mismatch.
    """
    loop = loop or CurrentLoopConfig()
    g = dict(TELESCOPE_GAINS, **(gains or {}))
    fc = np.broadcast_to(np.asarray(friction_coefficient, float), (2,)).copy()
    known = TanhFriction(fc, FRICTION_STEEPNESS, n=2, schedule=friction_schedule)
    mismatch = None
    if true_friction_coefficient is not None:
        ftrue = np.broadcast_to(np.asarray(true_friction_coefficient, float), (2,))
        if friction_schedule is not None:
            raise ValueError("a friction schedule with a separate true coefficient is not supported")
        mismatch = TanhFriction(ftrue - fc, FRICTION_STEEPNESS, n=2)
    model = PlantModel(B_TELESCOPE, [loop.electrical_time_constant] * 2, h1=known,
                       q=ParametricDisturbance(2, friction=mismatch))
    w = 2 * math.pi / TRAJECTORY_PERIOD
    traj = sine_reference(speed_multiple * SIDEREAL_RATE / w, w, 2)
    ctrl = ControllerGains(g["Kp"], g["Kd"], compensation_mode, True)
    obs = ObserverGains(g["K1"], g["K2"], g["K3"])
    return ScenarioConfig(model=model, controller=ctrl, observer=obs, trajectory=traj,
                          duration=duration, step=step, input_model=loop, record_every=record_every,
                          name=name or f"telescope_{speed_multiple:g}vs_{CompensationMode(compensation_mode).value}")


@dataclass
class TelescopeRun:
    label: str
    result: ScenarioResult

    @property
    def ISE_axes(self):
        return self.result.ISE_axes


def run_telescope(base: ScenarioConfig, variants: Sequence = ("none", "reference_based"),
                  backend: Optional[str] = None) -> list:
    """Run ``base`` once per compensation variant.

    ``variants`` holds compensation modes or ``(label, mode)`` pairs.  Returns
    a list of :class:`TelescopeRun` in the given order.
    """
    if base.current_loop is None:
        raise ValueError("telescope runs need a current-loop input model")
    if base.model.n != 2:
        raise ValueError("telescope runs need a two-axis plant")
    out = []
    for var in variants:
        label, mode = (var, var) if isinstance(var, str) else var
        ctrl = ControllerGains(base.controller.Kp, base.controller.Kd, mode,
                               base.controller.rejection_enabled)
        cfg = base.replace(controller=ctrl, name=f"{base.name}_{label}" if base.name else label)
        out.append(TelescopeRun(label, run_scenario(cfg, backend)))
    return out
