"""Feedback law with known-dynamics compensation and disturbance rejection.

    v = B^-1 (Kp (xd - z1^) + Kd (xd' - z2^) - h_u + xd'' - w_c)

with ``w_c = z3^`` when rejection is enabled and zero otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .model import PlantModel
from .observer import _diag_vec
from .scaling import ScaledSystem, delta, scaled_error_derivatives


class CompensationMode(str, Enum):
    NONE = "none"
    REFERENCE_BASED = "reference_based"
    ESTIMATE_BASED = "estimate_based"


@dataclass(frozen=True)
class ControllerGains:
    """Diagonal PD gains plus the compensation and rejection switches."""

    Kp: np.ndarray
    Kd: np.ndarray
    compensation_mode: CompensationMode = CompensationMode.NONE
    rejection_enabled: bool = True

    def __post_init__(self):
        kp = _diag_vec(self.Kp, name="Kp")
        kd = _diag_vec(self.Kd, kp.shape[0], "Kd")
        if np.any(kp <= 0) or np.any(kd <= 0):
            raise ValueError("Kp and Kd must have strictly positive diagonal entries")
        object.__setattr__(self, "Kp", kp)
        object.__setattr__(self, "Kd", kd)
        object.__setattr__(self, "compensation_mode", CompensationMode(self.compensation_mode))
        object.__setattr__(self, "rejection_enabled", bool(self.rejection_enabled))

    @property
    def n(self) -> int:
        return self.Kp.shape[0]

    @property
    def Kc(self) -> np.ndarray:
        return np.hstack([np.diag(self.Kp), np.diag(self.Kd)])


@dataclass(frozen=True)
class ControlOutput:
    v: np.ndarray
    h_u: np.ndarray


def compensation(mode, model: PlantModel, xd, xd_dot, z1_hat, z2_hat, t: float = 0.0) -> np.ndarray:
    """Known-dynamics compensation ``h_u`` for the given mode."""
    mode = CompensationMode(mode)
    if mode is CompensationMode.NONE:
        return np.zeros(model.n)
    if mode is CompensationMode.REFERENCE_BASED:
        return model.h1(xd, xd_dot, t) + model.h2(xd, xd_dot, t)
    return model.h1(z1_hat, z2_hat, t) + model.h2(xd, xd_dot, t)


def feedback(gains: ControllerGains, model: PlantModel, ref, z1_hat, z2_hat, z3_hat,
             t: float = 0.0) -> ControlOutput:
    """Commanded input for one trajectory sample.

    Args:
        ref: sequence whose first three entries are ``xd, xd', xd''`` at ``t``
            (e.g. ``ReferenceTrajectory.sample(t)``).
    """
    n = model.n
    xd, xd_dot, xd_ddot = (np.asarray(ref[k], float).reshape(-1) for k in range(3))
    z1, z2, z3 = (np.asarray(z, float).reshape(-1) for z in (z1_hat, z2_hat, z3_hat))
    if gains.n != n or any(a.shape != (n,) for a in (xd, xd_dot, xd_ddot, z1, z2, z3)):
        raise ValueError(f"feedback: all signals must have length {n}")
    hu = compensation(gains.compensation_mode, model, xd, xd_dot, z1, z2, t)
    r = gains.Kp * (xd - z1) + gains.Kd * (xd_dot - z2) - hu + xd_ddot
    if gains.rejection_enabled:
        r = r - z3
    return ControlOutput(v=model.B_inv @ r, h_u=hu)


def hu_rate_matrices(mode, model: PlantModel, ref, z_hat, omega: float, kappa: float,
                     t: float = 0.0):
    """Chain-rule matrices ``(W_h4, W_h5, W_h6)`` with

        h_u' = W_h4 [xd'; xd''] - W_h5 e_bar' - W_h6 z_bar'

    Only the first two blocks of ``W_h6`` are nonzero, so ``z3'`` is never needed.
    """
    mode = CompensationMode(mode)
    n = model.n
    xd, xd_dot = (np.asarray(ref[k], float).reshape(n) for k in range(2))
    z_hat = np.asarray(z_hat, float)
    Z = np.zeros((n, n))
    if mode is CompensationMode.NONE:
        return np.zeros((n, 2 * n)), np.zeros((n, 2 * n)), np.zeros((n, 3 * n))
    if mode is CompensationMode.REFERENCE_BASED:
        da = model.h1.da(xd, xd_dot, t) + model.h2.da(xd, xd_dot, t)
        db = model.h1.db(xd, xd_dot, t) + model.h2.db(xd, xd_dot, t)
        return np.hstack([da, db]), np.zeros((n, 2 * n)), np.zeros((n, 3 * n))
    z1, z2 = z_hat[:n], z_hat[n:2 * n]
    h1a, h1b = model.h1.da(z1, z2, t), model.h1.db(z1, z2, t)
    h2a, h2b = model.h2.da(xd, xd_dot, t), model.h2.db(xd, xd_dot, t)
    W4 = np.hstack([h1a + h2a, h1b + h2b])
    W5 = np.hstack([h1a, kappa * omega * h1b])
    W6 = np.hstack([h1a, omega * h1b, Z])
    return W4, W5, W6


def hu_rate(mode, model: PlantModel, ref, z_hat, e_bar_dot, z_bar_dot, omega: float,
            kappa: float, t: float = 0.0) -> np.ndarray:
    """Time derivative of the compensation term from the scaled error rates."""
    n = model.n
    W4, W5, W6 = hu_rate_matrices(mode, model, ref, z_hat, omega, kappa, t)
    xr = np.concatenate([np.asarray(ref[1], float).reshape(n), np.asarray(ref[2], float).reshape(n)])
    return W4 @ xr - W5 @ np.asarray(e_bar_dot, float) - W6 @ np.asarray(z_bar_dot, float)


def control_derivative_analytic(system: ScaledSystem, e_bar, z_bar, omega: float, kappa: float,
                                hu_dot, xd_dddot, B) -> np.ndarray:
    """Closed-form ``v'`` in scaled coordinates (valid with rejection enabled).

        v' = B^-1 ( (kappa omega)^3 Kc_bar Hc_bar e_bar
                    + omega^3 (kappa Kc_bar W1_bar D3(kappa) + W2_bar D3(kappa) Ho_bar) z_bar
                    - h_u' + xd''' )
    """
    n = system.n
    B = np.atleast_2d(np.asarray(B, float))
    d3k = delta(3, kappa, n)
    e_bar, z_bar = np.asarray(e_bar, float), np.asarray(z_bar, float)
    r = ((kappa * omega) ** 3 * system.Kc_bar @ system.Hc_bar @ e_bar
         + omega ** 3 * (kappa * system.Kc_bar @ system.W1_bar @ d3k
                         + system.W2_bar @ d3k @ system.Ho_bar) @ z_bar
         - np.asarray(hu_dot, float).reshape(n) + np.asarray(xd_dddot, float).reshape(n))
    return np.linalg.solve(B, r)


def control_rate_check(result, system: ScaledSystem, model: PlantModel, edge: int = 2) -> dict:
    """Compare the closed-form ``v'`` with a five-point difference of recorded ``v``.

    ``result`` must be recorded at uniform spacing with rejection enabled
    and carry ``omega``/``kappa`` in its config.  Returns the maximum
    absolute and relative deviations over interior samples, the relative one
    normalised by ``max |v'|`` along the run.
    """
    cfg = result.config
    if not cfg.controller.rejection_enabled:
        raise ValueError("the closed form assumes disturbance rejection is enabled")
    if cfg.omega is None or cfg.kappa is None:
        raise ValueError("scaling parameters omega, kappa are required")
    omega, kappa, n = cfg.omega, cfg.kappa, model.n
    t, v, zeta = result.t, result.v, result.zeta_bar
    h = t[1] - t[0]
    # fourth-order five-point stencil
    idx = np.arange(2 + edge, len(t) - 2 - edge)
    numeric = (v[idx - 2] - 8 * v[idx - 1] + 8 * v[idx + 1] - v[idx + 2]) / (12 * h)
    analytic = np.empty_like(numeric)
    mode = cfg.controller.compensation_mode
    for j, k in enumerate(idx):
        ref = cfg.trajectory.sample(t[k])
        eb, zb, ut = zeta[k, :2 * n], zeta[k, 2 * n:5 * n], zeta[k, 5 * n:]
        # the third block of W_h6 is zero, so z3' does not enter h_u'
        e_dot, z_dot = scaled_error_derivatives(system, eb, zb, ut, np.zeros(n), omega, kappa, model.B)
        hud = hu_rate(mode, model, ref, result.z_hat[k], e_dot, z_dot, omega, kappa, t[k])
        analytic[j] = control_derivative_analytic(system, eb, zb, omega, kappa, hud, ref[3], model.B)
    dev = np.abs(numeric - analytic)
    scale = max(float(np.max(np.abs(numeric))), 1e-300)
    return {"max_abs": float(np.max(dev)), "max_relative": float(np.max(dev) / scale),
            "times": t[idx], "numeric": numeric, "analytic": analytic}
