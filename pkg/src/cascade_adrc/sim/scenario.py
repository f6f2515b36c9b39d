"""Scenario configuration, single runs and parameter grids."""

from __future__ import annotations

import dataclasses
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from ..control import CompensationMode, ControllerGains
from ..model import DisturbanceBounds, PlantModel, ReferenceTrajectory, sine_reference
from ..observer import ObserverGains
from ..scaling import ScaledSystem, scale_errors
from . import kernel
from .closed_loop import integrate_generic

FIRST_ORDER_LAG = "first_order_lag"
STEADY_STATE_FRACTION = 0.2
WINDUP_FRACTION = 0.5


class NumericAbort(RuntimeError):
    """NaN encountered during integration."""

    def __init__(self, index: int, t: float):
        super().__init__(f"NaN in the closed-loop derivative at sample {index} (t = {t:.17g} s)")
        self.index = index
        self.t = t


class WindupWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CurrentLoopConfig:
    """PI current loop with saturation and anti-windup.

    The electrical plant is a unit first-order lag with time constant
    ``electrical_time_constant``; torque is ``torque_constant`` times current.
    The feedforward term is ``feedforward_gain`` times the desired current.
    """

    k_p: float = 1.0
    k_i: float = 100.0
    k_s: float = 1.0
    U_m: float = 24.0
    feedforward_gain: float = 0.0
    torque_constant: float = 2.45
    electrical_time_constant: float = 1e-3
    loop_rate: float = 1e4

    def __post_init__(self):
        for name in ("k_p", "k_i", "U_m", "torque_constant", "electrical_time_constant", "loop_rate"):
            val = getattr(self, name)
            if not (math.isfinite(val) and val > 0):
                raise ValueError(f"current loop {name} must be positive, got {val}")
        if not (math.isfinite(self.k_s) and self.k_s >= 0):
            raise ValueError(f"current loop k_s must be nonnegative, got {self.k_s}")


@dataclass(frozen=True)
class StabilitySettings:
    """Certificate inputs carried by a scenario (weights and bound overrides)."""

    Qc: object = None
    Qo: object = None
    bounds: Optional[DisturbanceBounds] = None
    omega_min: float = 1e-3
    omega_max: float = 1e3
    omega_points: int = 200


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed for one closed-loop run.

    ``omega``/``kappa`` and ``scaled`` are set when gains come from the scaled
    parameterization; they enable the scaled-error outputs and grid sweeps
    over ``omega``.
    """

    model: PlantModel
    controller: ControllerGains
    observer: ObserverGains
    trajectory: ReferenceTrajectory
    duration: float
    step: float = 1e-4
    omega: Optional[float] = None
    kappa: Optional[float] = None
    scaled: Optional[ScaledSystem] = None
    input_model: Union[str, CurrentLoopConfig] = FIRST_ORDER_LAG
    record_every: int = 1
    x1_0: Optional[np.ndarray] = None
    x2_0: Optional[np.ndarray] = None
    stability: StabilitySettings = field(default_factory=StabilitySettings)
    name: str = ""

    def __post_init__(self):
        n = self.model.n
        if self.controller.n != n or self.observer.n != n or self.trajectory.n != n:
            raise ValueError("plant, gains and trajectory dimensions differ")
        if not (math.isfinite(self.step) and self.step > 0):
            raise ValueError(f"step must be positive, got {self.step}")
        if not (math.isfinite(self.duration) and self.duration >= self.step):
            raise ValueError(f"duration must be at least one step, got {self.duration}")
        if int(self.record_every) < 1:
            raise ValueError("record_every must be a positive integer")
        object.__setattr__(self, "record_every", int(self.record_every))
        if isinstance(self.input_model, str):
            if self.input_model != FIRST_ORDER_LAG:
                raise ValueError(f"unknown input model {self.input_model!r}")
            tmin = float(np.min(np.diag(self.model.T)))
            if self.step > 1e-3 * tmin * (1 + 1e-9):
                raise ValueError(
                    f"step {self.step:g} exceeds 1e-3 times the smallest time constant ({tmin:g}); "
                    "the input lag would be under-resolved")
        elif not isinstance(self.input_model, CurrentLoopConfig):
            raise TypeError("input_model must be 'first_order_lag' or a CurrentLoopConfig")
        for name in ("omega", "kappa"):
            val = getattr(self, name)
            if val is not None and not (math.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val}")
        for name in ("x1_0", "x2_0"):
            val = getattr(self, name)
            arr = np.zeros(n) if val is None else np.broadcast_to(np.asarray(val, float), (n,)).copy()
            object.__setattr__(self, name, arr)

    @classmethod
    def from_scaled(cls, model: PlantModel, scaled: ScaledSystem, omega: float, kappa: float,
                    trajectory: ReferenceTrajectory, rejection_enabled: bool = True,
                    compensation_mode=CompensationMode.NONE, **kw) -> "ScenarioConfig":
        un = scaled.unscaled(omega, kappa)
        ctrl = ControllerGains(un["Kp"], un["Kd"], compensation_mode, rejection_enabled)
        return cls(model=model, controller=ctrl, observer=un["observer"], trajectory=trajectory,
                   omega=omega, kappa=kappa, scaled=scaled, **kw)

    @property
    def current_loop(self) -> Optional[CurrentLoopConfig]:
        return self.input_model if isinstance(self.input_model, CurrentLoopConfig) else None

    @property
    def state_dim(self) -> int:
        return (7 if self.current_loop is not None else 6) * self.model.n

    @property
    def nsteps(self) -> int:
        return max(1, int(round(self.duration / self.step)))

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def cell(self, T=None, omega=None, rejection_enabled=None) -> "ScenarioConfig":
        """Variant with another time constant, bandwidth or rejection switch."""
        cfg = self
        if T is not None:
            m = self.model
            Tm = np.diag(np.broadcast_to(np.asarray(T, float), (m.n,)).copy())
            cfg = cfg.replace(model=PlantModel(m.B, Tm, m.h1, m.h2, m.q))
        if omega is not None:
            if self.scaled is None or self.kappa is None:
                raise ValueError("changing omega needs gains given in scaled form")
            un = self.scaled.unscaled(omega, self.kappa)
            ctrl = dataclasses.replace(cfg.controller, Kp=un["Kp"], Kd=un["Kd"])
            cfg = cfg.replace(controller=ctrl, observer=un["observer"], omega=float(omega))
        if rejection_enabled is not None:
            cfg = cfg.replace(controller=dataclasses.replace(cfg.controller,
                                                             rejection_enabled=bool(rejection_enabled)))
        return cfg

    def initial_state(self) -> np.ndarray:
        n = self.model.n
        s = np.zeros(self.state_dim)
        s[:n] = self.x1_0
        s[n:2 * n] = self.x2_0
        s[3 * n:4 * n] = self.x1_0
        return s


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    t: np.ndarray
    x1: np.ndarray
    x2: np.ndarray
    u: np.ndarray
    v: np.ndarray
    h_u: np.ndarray
    z_hat: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    z_tilde: np.ndarray
    u_tilde: np.ndarray
    zeta_bar: Optional[np.ndarray]
    ISE_axes: np.ndarray
    ISC_axes: np.ndarray
    diverged: bool
    steady_state_sup_zeta_bar: Optional[float]
    saturation_fraction: Optional[np.ndarray]
    windup_warning: bool
    backend: str
    current: Optional[np.ndarray] = None
    integrator: Optional[np.ndarray] = None
    trajectory_bound_violations: list = field(default_factory=list)

    @property
    def ISE(self) -> float:
        return float(np.sum(self.ISE_axes))

    @property
    def ISC(self) -> float:
        return float(np.sum(self.ISC_axes))

    def summary(self) -> dict:
        sup = self.steady_state_sup_zeta_bar
        return {
            "name": self.config.name,
            "ISE": self.ISE,
            "ISC": self.ISC,
            "ISE_axes": [float(x) for x in self.ISE_axes],
            "ISC_axes": [float(x) for x in self.ISC_axes],
            "diverged": bool(self.diverged),
            "steady_state_sup_zeta_bar": None if sup is None else (sup if math.isfinite(sup) else "inf"),
            "duration": float(self.config.duration),
            "step": float(self.config.step),
            "samples": int(len(self.t)),
            "final_time": float(self.t[-1]) if len(self.t) else 0.0,
            "windup_warning": bool(self.windup_warning),
            "backend": self.backend,
        } | ({} if self.saturation_fraction is None
             else {"saturation_fraction": [float(x) for x in self.saturation_fraction]})


def _postprocess(config: ScenarioConfig, raw: kernel.RawRun) -> ScenarioResult:
    if raw.status == kernel.NAN_ABORT:
        raise NumericAbort(raw.index, raw.index * config.step)
    m, n = config.model, config.model.n
    x = raw.x
    t = raw.t
    x1, x2, w, zh = x[:, :n], x[:, n:2 * n], x[:, 2 * n:3 * n], x[:, 3 * n:6 * n]
    loop = config.current_loop
    u = w * loop.torque_constant if loop is not None else w
    ref = config.trajectory.sample_many(t)
    e1, e2 = ref[0] - x1, ref[1] - x2
    z3 = (m.q.evaluate_many(x1, x2, u, t) + m.h1.evaluate_many(x1, x2, t)
          + m.h2.evaluate_many(x1, x2, t) - raw.hu)
    z_tilde = np.hstack([x1, x2, z3]) - zh
    u_tilde = raw.v - u
    diverged = raw.status == kernel.DIVERGED
    zeta = None
    sup = None
    if config.omega is not None and config.kappa is not None:
        eb, zb = scale_errors(np.hstack([e1, e2]), z_tilde, config.omega, config.kappa)
        zeta = np.hstack([eb, zb, u_tilde])
        if diverged:
            sup = math.inf
        else:
            mask = t >= (1.0 - STEADY_STATE_FRACTION) * config.duration - 1e-12
            sup = float(np.max(np.linalg.norm(zeta[mask], axis=1)))
    sat_frac, windup = None, False
    if loop is not None:
        steps = max(1, (raw.index if diverged else config.nsteps) + 1)
        sat_frac = raw.sat_count / steps
        if np.any(sat_frac > WINDUP_FRACTION):
            windup = True
            warnings.warn(
                f"current-loop saturation active for {100 * float(np.max(sat_frac)):.1f}% of the horizon",
                WindupWarning, stacklevel=3)
    return ScenarioResult(
        config=config, t=t, x1=x1, x2=x2, u=u, v=raw.v, h_u=raw.hu, z_hat=zh, e1=e1, e2=e2,
        z_tilde=z_tilde, u_tilde=u_tilde, zeta_bar=zeta, ISE_axes=raw.ise, ISC_axes=raw.isc,
        diverged=diverged, steady_state_sup_zeta_bar=sup, saturation_fraction=sat_frac,
        windup_warning=windup, backend=raw.backend,
        current=w if loop is not None else None,
        integrator=x[:, 6 * n:7 * n] if loop is not None else None,
        trajectory_bound_violations=config.trajectory.check_bounds(t) if len(t) else [],
    )


def run_scenario(config: ScenarioConfig, backend: Optional[str] = None) -> ScenarioResult:
    """Fixed-step RK4 run of the closed loop.

    ``backend`` is ``"compiled"``, ``"python"`` (kernel backends) or
    ``"generic"``; by default the kernel is used when the configuration only
    contains built-in components and the generic engine otherwise.
    """
    spec = kernel.build_spec(config) if backend != "generic" else None
    if backend not in (None, "generic") and spec is None:
        raise ValueError("configuration uses custom components; only the generic engine applies")
    x0 = config.initial_state()
    if spec is None:
        raw = integrate_generic(config, x0, config.nsteps)
    else:
        raw = kernel.integrate(spec, x0, 0.0, config.step, config.nsteps, config.record_every, backend)
    return _postprocess(config, raw)


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------


@dataclass
class GridCell:
    T: float
    omega: float
    rejection: bool
    result: Optional[ScenarioResult] = None
    error: str = ""
    report: object = None

    def row(self) -> dict:
        r = self.result
        rep = self.report
        return {
            "T": self.T, "omega": self.omega, "rejection": self.rejection,
            "ISE": r.ISE if r else math.nan, "ISC": r.ISC if r else math.nan,
            "diverged": r.diverged if r else "",
            "sup_zeta_bar": (r.steady_state_sup_zeta_bar if r and r.steady_state_sup_zeta_bar is not None
                             else math.nan),
            "lambda_min_QY1": rep.lambda_min_QY1 if rep else math.nan,
            "Lambda_V": rep.Lambda_V if rep else math.nan,
            "Gamma_V": rep.Gamma_V if rep else math.nan,
            "error_bound": rep.error_bound if rep else math.nan,
            "certified": bool(rep.certified) if rep else False,
            "error": self.error,
        }


def cell_certificate(config: ScenarioConfig):
    """Stability report for a grid cell, or None when it does not apply.

    The certificate covers the loop with disturbance rejection and the
    first-order input lag, with gains in scaled form.
    """
    from ..stability import certify

    if (config.scaled is None or config.omega is None or config.kappa is None
            or not config.controller.rejection_enabled or config.current_loop is not None):
        return None
    bounds = config.stability.bounds or config.model.disturbance_bounds()
    if bounds is None:
        return None
    return certify(config.scaled, config.model.B, config.model.T, config.omega, config.kappa,
                   bounds, config.trajectory, config.stability.Qc, config.stability.Qo)


def run_grid(base: ScenarioConfig, T_values: Sequence[float], omega_values: Sequence[float],
             rejection_values: Sequence[bool] = (True, False), parallel: int = 1,
             backend: Optional[str] = None, certificate: bool = True) -> list:
    """Run every (T, omega, rejection) cell; failures are recorded per cell."""
    T_values, omega_values, rejection_values = list(T_values), list(omega_values), list(rejection_values)
    if not T_values or not omega_values or not rejection_values:
        raise ValueError("grid value lists must be nonempty")
    cells = [GridCell(float(T), float(w), bool(r)) for T in T_values for w in omega_values
             for r in rejection_values]

    def work(cell: GridCell) -> GridCell:
        try:
            cfg = base.cell(T=cell.T, omega=cell.omega, rejection_enabled=cell.rejection)
            if certificate:
                cell.report = cell_certificate(cfg)
            cell.result = run_scenario(cfg, backend)
        except Exception as exc:  # recorded, never aborts the grid
            cell.error = f"{type(exc).__name__}: {exc}"
        return cell

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as ex:
            return list(ex.map(work, cells))
    return [work(c) for c in cells]


# ---------------------------------------------------------------------------
# Open-loop observer runs
# ---------------------------------------------------------------------------


@dataclass
class ObserverRun:
    t: np.ndarray
    z: np.ndarray
    z_hat: np.ndarray
    z_tilde: np.ndarray
    u: np.ndarray


def run_observer(model: PlantModel, gains: ObserverGains, duration: float, step: float = 1e-4,
                 x1_0=None, x2_0=None, v=None, record_every: int = 1) -> ObserverRun:
    """Integrate the plant with a prescribed command ``v(t)`` and the ESO alongside.

    No feedback is applied and ``h_u = 0``, so the total disturbance is
    ``z3 = q + h``.  ``v`` defaults to zero, which keeps ``u = v`` exactly.
    """
    n = model.n
    v = v or (lambda t: np.zeros(n))
    x1_0 = np.zeros(n) if x1_0 is None else np.broadcast_to(np.asarray(x1_0, float), (n,))
    x2_0 = np.zeros(n) if x2_0 is None else np.broadcast_to(np.asarray(x2_0, float), (n,))
    zero = np.zeros(n)

    def f(t, s):
        x1, x2, u, zh = s[:n], s[n:2 * n], s[2 * n:3 * n], s[3 * n:]
        vt = np.asarray(v(t), float).reshape(n)
        x2d = model.B @ u + model.h(x1, x2, t) + model.q(x1, x2, u, t)
        zi = x1 - zh[:n]
        return np.concatenate([x2, x2d, model.T_inv @ (vt - u),
                               gains.K1 * zi + zh[n:2 * n],
                               gains.K2 * zi + zh[2 * n:] + zero + model.B @ vt,
                               gains.K3 * zi])

    s = np.concatenate([x1_0, x2_0, np.zeros(n), x1_0, np.zeros(2 * n)])
    N = max(1, int(round(duration / step)))
    ts, xs = [0.0], [s.copy()]
    for k in range(N):
        t = k * step
        k1 = f(t, s)
        k2 = f(t + 0.5 * step, s + 0.5 * step * k1)
        k3 = f(t + 0.5 * step, s + 0.5 * step * k2)
        k4 = f(t + step, s + step * k3)
        s = s + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if (k + 1) % record_every == 0 or k + 1 == N:
            ts.append((k + 1) * step)
            xs.append(s.copy())
    t = np.array(ts)
    X = np.array(xs)
    x1, x2, u = X[:, :n], X[:, n:2 * n], X[:, 2 * n:3 * n]
    z3 = np.array([model.h(a, b, ti) + model.q(a, b, c, ti) for a, b, c, ti in zip(x1, x2, u, t)])
    z = np.hstack([x1, x2, z3])
    zh = X[:, 3 * n:]
    return ObserverRun(t, z, zh, z - zh, u)


# ---------------------------------------------------------------------------
# Preset for the scalar simulation study
# ---------------------------------------------------------------------------

NOMINAL_SCALED = dict(Kp_bar=1.0, Kd_bar=2.0, K1_bar=3.0, K2_bar=3.0, K3_bar=1.0)
NOMINAL_KAPPA = 0.01


def scalar_config(T: float = 0.1, omega: float = 4.0, rejection_enabled: bool = True,
                    kappa: float = NOMINAL_KAPPA, duration: float = 20.0, step: float = 1e-4,
                    record_every: int = 10, Qc=None, Qo=None) -> ScenarioConfig:
    """Scalar plant ``B = 1`` with zero known dynamics tracking ``sin(10 t)``."""
    model = PlantModel(np.eye(1), [T])
    scaled = ScaledSystem.from_gains(**NOMINAL_SCALED)
    return ScenarioConfig.from_scaled(
        model, scaled, omega, kappa, sine_reference(1.0, 10.0, 1), rejection_enabled,
        CompensationMode.NONE, duration=duration, step=step, record_every=record_every,
        stability=StabilitySettings(Qc=Qc, Qo=Qo), name=f"T{T:g}_w{omega:g}_{'on' if rejection_enabled else 'off'}")
