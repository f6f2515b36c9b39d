"""Generic numpy closed loop for arbitrary plant components and references.

Slower than the kernel but accepts any :class:`~cascade_adrc.model.Component`,
:class:`~cascade_adrc.model.Disturbance` and
:class:`~cascade_adrc.model.ReferenceTrajectory`.  The RK4 stepping, metric
accumulation and divergence rules are the same as in the kernel.
"""

from __future__ import annotations

import numpy as np

from ..control import feedback
from .kernel import DIVERGED, DIVERGENCE_THRESHOLD, NAN_ABORT, OK, RawRun


class ClosedLoop:
    """Right-hand side of the plant, input model, observer and controller."""

    def __init__(self, config):
        self.config = config
        self.model = config.model
        self.n = self.model.n
        self.dim = config.state_dim

    def derivative(self, t: float, s: np.ndarray):
        """Return ``(ds, v, h_u, saturated, xd)`` at state ``s``."""
        cfg, m, n = self.config, self.model, self.n
        ref = cfg.trajectory.sample(t)
        zh = s[3 * n:6 * n]
        out = feedback(cfg.controller, m, ref, zh[:n], zh[n:2 * n], zh[2 * n:], t)
        v, hu = out.v, out.h_u
        x1, x2, w = s[:n], s[n:2 * n], s[2 * n:3 * n]
        ds = np.empty(self.dim)
        sat = np.zeros(n, dtype=bool)
        loop = cfg.current_loop
        if loop is None:
            ds[2 * n:3 * n] = m.T_inv @ (v - w)
            u = w
        else:
            integ = s[6 * n:7 * n]
            idem = v / loop.torque_constant
            it = idem - w
            pre = loop.k_p * it + integ + loop.feedforward_gain * idem
            out_v = np.clip(pre, -loop.U_m, loop.U_m)
            sat = out_v != pre
            ds[2 * n:3 * n] = (out_v - w) / loop.electrical_time_constant
            ds[6 * n:7 * n] = loop.k_i * (it - loop.k_s * (pre - out_v))
            u = loop.torque_constant * w
        ds[:n] = x2
        ds[n:2 * n] = m.B @ u + m.h1(x1, x2, t) + m.h2(x1, x2, t) + m.q(x1, x2, u, t)
        innov = x1 - zh[:n]
        obs = cfg.observer
        ds[3 * n:4 * n] = obs.K1 * innov + zh[n:2 * n]
        ds[4 * n:5 * n] = obs.K2 * innov + zh[2 * n:] + hu + m.B @ v
        ds[5 * n:6 * n] = obs.K3 * innov
        return ds, v, hu, sat, ref[0]


def integrate_generic(config, x0, nsteps: int) -> RawRun:
    """Fixed-step RK4 over the generic closed loop."""
    sys = ClosedLoop(config)
    n, dt, re = sys.n, config.step, config.record_every
    s = np.array(x0, dtype=float)
    thr2 = DIVERGENCE_THRESHOLD ** 2
    ise, isc = np.zeros(n), np.zeros(n)
    e_prev, c_prev = np.zeros(n), np.zeros(n)
    cnt = np.zeros(n, dtype=np.int64)
    rt, rx, rv, rhu = [], [], [], []
    status, index = OK, -1
    h2, h6 = 0.5 * dt, dt / 6.0
    for k in range(nsteps + 1):
        t = k * dt
        k1, v, hu, sat, xd = sys.derivative(t, s)
        nrm2 = float(s @ s)
        if np.isnan(nrm2) or np.any(np.isnan(k1)):
            status, index = NAN_ABORT, k
            break
        e2 = (xd - s[:n]) ** 2
        c2 = v * v
        if k > 0:
            ise += h2 * (e_prev + e2)
            isc += h2 * (c_prev + c2)
        e_prev, c_prev = e2, c2
        cnt += sat
        if k % re == 0 or k == nsteps or nrm2 > thr2:
            rt.append(t)
            rx.append(s.copy())
            rv.append(v)
            rhu.append(hu)
        if nrm2 > thr2:
            status, index = DIVERGED, k
            break
        if k == nsteps:
            break
        k2 = sys.derivative(t + h2, s + h2 * k1)[0]
        k3 = sys.derivative(t + h2, s + h2 * k2)[0]
        k4 = sys.derivative(t + dt, s + dt * k3)[0]
        s = s + h6 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    dim = sys.dim
    return RawRun(np.array(rt), np.array(rx).reshape(-1, dim), np.array(rv).reshape(-1, n),
                  np.array(rhu).reshape(-1, n), ise, isc, cnt, status, index, "generic")


def closed_loop_jacobian(config, t: float = 0.0, state=None, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the closed-loop right-hand side.

    For a linear plant with a zero reference this is the exact system matrix,
    whose spectral abscissa decides stability of a grid cell.
    """
    sys = ClosedLoop(config)
    s0 = np.zeros(sys.dim) if state is None else np.asarray(state, float)
    J = np.empty((sys.dim, sys.dim))
    for j in range(sys.dim):
        d = np.zeros(sys.dim)
        d[j] = step
        J[:, j] = (sys.derivative(t, s0 + d)[0] - sys.derivative(t, s0 - d)[0]) / (2 * step)
    return J
