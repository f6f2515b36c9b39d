"""Backend selection and parameter packing for the closed-loop RK4 kernel.

The compiled extension is used when importable; setting the environment
variable ``CASCADE_ADRC_PURE_PYTHON=1`` forces the pure-Python fallback.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..control import CompensationMode
from ..model import ParametricDisturbance, SineReference, TanhFriction, ZeroComponent
from . import _kernel_py

OK, DIVERGED, NAN_ABORT = 0, 1, 2
DIVERGENCE_THRESHOLD = 1e9


def _load_compiled():
    if os.environ.get("CASCADE_ADRC_PURE_PYTHON", "") not in ("", "0"):
        return None
    try:
        from . import _kernel
    except ImportError:
        return None
    return _kernel.integrate


_compiled = _load_compiled()
BACKEND = "compiled" if _compiled is not None else "python"


def available_backends() -> list:
    return (["compiled"] if _compiled is not None else []) + ["python"]


@dataclass
class KernelSpec:
    """Flat numeric description of a kernel-eligible closed loop."""

    n: int
    dim: int
    B: np.ndarray
    Binv: np.ndarray
    Tinv: np.ndarray
    K1: np.ndarray
    K2: np.ndarray
    K3: np.ndarray
    Kp: np.ndarray
    Kd: np.ndarray
    mode: int
    reject: bool
    h1_ft: np.ndarray
    h1_sched_t: np.ndarray
    h1_sched_fc: np.ndarray
    q_ft: np.ndarray
    q_sched_t: np.ndarray
    q_sched_fc: np.ndarray
    q_off: np.ndarray
    q_amp: np.ndarray
    q_freq: np.ndarray
    ref_amp: np.ndarray
    ref_freq: np.ndarray
    current_loop: bool
    loop_params: np.ndarray
    div_threshold: float = DIVERGENCE_THRESHOLD


@dataclass
class RawRun:
    """Unprocessed integrator output shared by all engines."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    hu: np.ndarray
    ise: np.ndarray
    isc: np.ndarray
    sat_count: np.ndarray
    status: int
    index: int
    backend: str


_MODES = {CompensationMode.NONE: 0, CompensationMode.REFERENCE_BASED: 1, CompensationMode.ESTIMATE_BASED: 2}


def _friction_parts(comp, n):
    if isinstance(comp, ZeroComponent):
        return np.zeros(n), np.zeros(1), np.zeros((1, n))
    if type(comp) is TanhFriction:
        return comp.steepness.copy(), comp.times.copy(), comp.values.copy()
    return None


def build_spec(config) -> Optional[KernelSpec]:
    """Pack ``config`` for the kernel, or return None if it uses custom components."""
    m = config.model
    n = m.n
    h1 = _friction_parts(m.h1, n)
    if h1 is None or not isinstance(m.h2, ZeroComponent):
        return None
    if type(m.q) is not ParametricDisturbance or type(config.trajectory) is not SineReference:
        return None
    qf = _friction_parts(m.q.friction, n) if m.q.friction is not None else (
        np.zeros(n), np.zeros(1), np.zeros((1, n)))
    if qf is None:
        return None
    loop = config.current_loop
    if loop is not None:
        lp = np.array([loop.k_p, loop.k_i, loop.k_s, loop.U_m, loop.torque_constant,
                       loop.electrical_time_constant, loop.feedforward_gain])
    else:
        lp = np.array([1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0])
    c, o = config.controller, config.observer
    return KernelSpec(
        n=n, dim=config.state_dim, B=m.B.copy(), Binv=m.B_inv.copy(), Tinv=1.0 / np.diag(m.T),
        K1=o.K1, K2=o.K2, K3=o.K3, Kp=c.Kp, Kd=c.Kd,
        mode=_MODES[c.compensation_mode], reject=c.rejection_enabled,
        h1_ft=h1[0], h1_sched_t=h1[1], h1_sched_fc=h1[2],
        q_ft=qf[0], q_sched_t=qf[1], q_sched_fc=qf[2],
        q_off=m.q.offset, q_amp=m.q.amplitude, q_freq=m.q.frequency,
        ref_amp=config.trajectory.amplitude, ref_freq=config.trajectory.angular_frequency,
        current_loop=loop is not None, loop_params=lp,
    )


def integrate(spec: KernelSpec, x0, t0: float, dt: float, nsteps: int, record_every: int,
              backend: Optional[str] = None) -> RawRun:
    """Run the kernel; ``backend`` is ``"compiled"``, ``"python"`` or None for the default."""
    backend = backend or BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernel is not available")
        out = _compiled(spec, np.asarray(x0, float), float(t0), float(dt), int(nsteps), int(record_every))
    elif backend == "python":
        out = _kernel_py.integrate(spec, list(map(float, x0)), float(t0), float(dt), int(nsteps),
                                   int(record_every))
    else:
        raise ValueError(f"unknown backend {backend!r}")
    rt, rx, rv, rhu, ise, isc, cnt, status, index, nrec = out
    n, dim = spec.n, spec.dim
    return RawRun(
        t=np.asarray(rt, float).reshape(nrec),
        x=np.asarray(rx, float).reshape(nrec, dim),
        v=np.asarray(rv, float).reshape(nrec, n),
        hu=np.asarray(rhu, float).reshape(nrec, n),
        ise=np.asarray(ise, float), isc=np.asarray(isc, float),
        sat_count=np.asarray(cnt, dtype=np.int64), status=int(status), index=int(index),
        backend=backend,
    )
