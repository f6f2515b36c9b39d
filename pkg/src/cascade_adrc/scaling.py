"""Bandwidth scaling of gains, errors and closed-loop matrices.

The observer bandwidth ``omega`` and the relative controller bandwidth
``kappa`` parameterize all gains through the diagonal operator
``delta(m, a) = diag(a^(m-1) I, ..., a I, I)``:

    K1 = omega K1_bar,  K2 = omega^2 K2_bar,  K3 = omega^3 K3_bar
    Kp = (kappa omega)^2 Kp_bar,  Kd = kappa omega Kd_bar
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .observer import ObserverGains, build_C0, build_C1, build_Ho


def _check_positive(**kw):
    for name, val in kw.items():
        if not (np.isfinite(val) and val > 0):
            raise ValueError(f"{name} must be positive and finite, got {val}")


def delta(m: int, alpha: float, n: int = 1) -> np.ndarray:
    """Block-diagonal ``diag(alpha^(m-1) I, ..., I)`` of size ``m n``."""
    if m not in (2, 3):
        raise ValueError("delta is defined for m in {2, 3}")
    _check_positive(alpha=alpha)
    return np.diag(np.repeat([alpha ** (m - 1 - k) for k in range(m)], n))


def build_C2(n: int) -> np.ndarray:
    """Selector ``[0; I]`` (2n-by-n)."""
    return np.vstack([np.zeros((n, n)), np.eye(n)])


def _diag(k) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return np.diag(np.atleast_1d(k)) if k.ndim < 2 else k


def build_Hc(Kp, Kd) -> np.ndarray:
    """Tracking error matrix ``[[0, I], [-Kp, -Kd]]``."""
    Kp, Kd = _diag(Kp), _diag(Kd)
    n = Kp.shape[0]
    return np.block([[np.zeros((n, n)), np.eye(n)], [-Kp, -Kd]])


def build_W1(Kp, Kd) -> np.ndarray:
    """Coupling of the observation error into the tracking error, 2n-by-3n."""
    Kp, Kd = _diag(Kp), _diag(Kd)
    n = Kp.shape[0]
    return np.block([[np.zeros((n, 3 * n))], [-Kp, -Kd, -np.eye(n)]])


def build_W2(Kp, Kd) -> np.ndarray:
    """``[Kc I] = [Kp Kd I]``, n-by-3n."""
    Kp, Kd = _diag(Kp), _diag(Kd)
    return np.hstack([Kp, Kd, np.eye(Kp.shape[0])])


@dataclass(frozen=True)
class ScalingParams:
    omega: float
    kappa: float

    def __post_init__(self):
        _check_positive(omega=self.omega, kappa=self.kappa)


@dataclass(frozen=True)
class ScaledSystem:
    """Scaled gains and the matrices built from them.

    Attributes:
        Kc_bar: ``[Kp_bar Kd_bar]``, n-by-2n.
        Ko_bar: ``[K1_bar; K2_bar; K3_bar]``, 3n-by-n.
        Hc_bar, Ho_bar, W1_bar, W2_bar: matrices built from the scaled gains.
    """

    Kc_bar: np.ndarray
    Ko_bar: np.ndarray
    Hc_bar: np.ndarray
    Ho_bar: np.ndarray
    W1_bar: np.ndarray
    W2_bar: np.ndarray

    @classmethod
    def from_gains(cls, Kp_bar, Kd_bar, K1_bar, K2_bar, K3_bar) -> "ScaledSystem":
        """Build from diagonal scaled gains (vectors or scalars broadcast to n)."""
        k1 = np.atleast_1d(np.asarray(K1_bar, dtype=float))
        n = max(k1.shape[0], *(np.atleast_1d(np.asarray(g, float)).shape[0]
                               for g in (Kp_bar, Kd_bar, K2_bar, K3_bar)))
        vec = lambda g: np.broadcast_to(np.atleast_1d(np.asarray(g, float)), (n,)).copy()
        kp, kd = vec(Kp_bar), vec(Kd_bar)
        if np.any(kp <= 0) or np.any(kd <= 0):
            raise ValueError("controller gains must be strictly positive")
        obs = ObserverGains(vec(K1_bar), vec(K2_bar), vec(K3_bar))
        Hc = build_Hc(kp, kd)
        eig = np.linalg.eigvals(Hc)
        if np.max(eig.real) >= -1e-9:
            raise ValueError(f"scaled controller matrix is not Hurwitz (eigenvalue {eig[np.argmax(eig.real)]:.6g})")
        return cls(
            Kc_bar=np.hstack([np.diag(kp), np.diag(kd)]),
            Ko_bar=obs.stacked,
            Hc_bar=Hc,
            Ho_bar=build_Ho(obs),
            W1_bar=build_W1(kp, kd),
            W2_bar=build_W2(kp, kd),
        )

    @property
    def n(self) -> int:
        return self.Kc_bar.shape[0]

    @property
    def Kp_bar(self) -> np.ndarray:
        return np.diag(self.Kc_bar[:, :self.n]).copy()

    @property
    def Kd_bar(self) -> np.ndarray:
        return np.diag(self.Kc_bar[:, self.n:]).copy()

    @property
    def K_bar(self) -> tuple:
        """Scaled observer gains ``(K1_bar, K2_bar, K3_bar)`` as vectors."""
        n = self.n
        return tuple(np.diag(self.Ko_bar[k * n:(k + 1) * n]).copy() for k in range(3))

    def unscaled(self, omega: float, kappa: float) -> dict:
        """Unscaled gains and matrices at ``(omega, kappa)``."""
        Kc, Ko = unscale_gains(self, omega, kappa)
        n = self.n
        Kp, Kd = Kc[:, :n], Kc[:, n:]
        obs = ObserverGains(*(np.diag(Ko[k * n:(k + 1) * n]) for k in range(3)))
        return {
            "Kc": Kc, "Ko": Ko, "Kp": np.diag(Kp).copy(), "Kd": np.diag(Kd).copy(),
            "observer": obs, "Hc": build_Hc(Kp, Kd), "Ho": build_Ho(obs),
            "W1": build_W1(Kp, Kd), "W2": build_W2(Kp, Kd),
        }


def scale_gains(Kc, Ko, omega: float, kappa: float) -> ScaledSystem:
    """Scaled system from unscaled ``Kc = [Kp Kd]`` (n-by-2n) and ``Ko = [K1; K2; K3]`` (3n-by-n)."""
    _check_positive(omega=omega, kappa=kappa)
    Kc, Ko = np.atleast_2d(np.asarray(Kc, float)), np.atleast_2d(np.asarray(Ko, float))
    n = Kc.shape[0]
    if Kc.shape != (n, 2 * n) or Ko.shape != (3 * n, n):
        raise ValueError("Kc must be n-by-2n and Ko 3n-by-n")
    kw = kappa * omega
    Kc_bar = Kc @ np.linalg.inv(delta(2, kw, n)) / kw
    Ko_bar = delta(3, omega, n) @ Ko / omega ** 3
    blocks = [np.diag(Kc_bar[:, :n]), np.diag(Kc_bar[:, n:])]
    blocks += [np.diag(Ko_bar[k * n:(k + 1) * n]) for k in range(3)]
    return ScaledSystem.from_gains(*blocks)


def unscale_gains(system: ScaledSystem, omega: float, kappa: float):
    """Inverse of :func:`scale_gains`; returns ``(Kc, Ko)``."""
    _check_positive(omega=omega, kappa=kappa)
    n = system.n
    kw = kappa * omega
    Kc = kw * system.Kc_bar @ delta(2, kw, n)
    Ko = omega ** 3 * np.linalg.inv(delta(3, omega, n)) @ system.Ko_bar
    return Kc, Ko


def verify_scaling_identities(system: ScaledSystem, omega: float, kappa: float) -> dict:
    """Residuals of the five similarity/scaling identities.

    Each residual is ``max|lhs - rhs| / max(1, max|rhs|)``, so it stays at
    round-off level when the entries grow like powers of ``omega``.  The last
    identity is evaluated as ``W2 = W2_bar delta3(kappa omega)`` (right
    multiplication); the left-multiplied form does not conform.
    """
    n = system.n
    kw = kappa * omega
    un = system.unscaled(omega, kappa)
    d2, d3w, d3k = delta(2, kw, n), delta(3, omega, n), delta(3, kappa, n)
    pairs = {
        "Hc_similarity": (d2 @ un["Hc"] @ np.linalg.inv(d2), kw * system.Hc_bar),
        "Ho_similarity": (d3w @ un["Ho"] @ np.linalg.inv(d3w), omega * system.Ho_bar),
        "W1_invariance": (d2 @ un["W1"], un["W1"]),
        "W1_scaling": (un["W1"] @ np.linalg.inv(d3w), system.W1_bar @ d3k),
        "W2_scaling": (un["W2"], system.W2_bar @ delta(3, kw, n)),
    }
    return {k: float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))
            for k, (a, b) in pairs.items()}


def scale_errors(e, z_tilde, omega: float, kappa: float):
    """Scaled errors ``e_bar = (e1, e2/(kappa omega))`` and ``z_bar = (z1, z2/omega, z3/omega^2)``.

    Accepts single vectors or arrays with samples along the first axis.
    """
    _check_positive(omega=omega, kappa=kappa)
    e, z = np.asarray(e, float), np.asarray(z_tilde, float)
    n = e.shape[-1] // 2
    se = np.repeat([1.0, 1.0 / (kappa * omega)], n)
    sz = np.repeat([1.0, 1.0 / omega, 1.0 / omega ** 2], n)
    return e * se, z * sz


def unscale_errors(e_bar, z_bar, omega: float, kappa: float):
    """Inverse of :func:`scale_errors`."""
    _check_positive(omega=omega, kappa=kappa)
    e, z = np.asarray(e_bar, float), np.asarray(z_bar, float)
    n = e.shape[-1] // 2
    return e * np.repeat([1.0, kappa * omega], n), z * np.repeat([1.0, omega, omega ** 2], n)


def scaled_error_derivatives(system: ScaledSystem, e_bar, z_bar, u_tilde, z3_dot,
                             omega: float, kappa: float, B):
    """Time derivatives of the scaled tracking and observation errors."""
    n = system.n
    B = np.atleast_2d(np.asarray(B, float))
    e_bar, z_bar = np.asarray(e_bar, float), np.asarray(z_bar, float)
    Bu = B @ np.asarray(u_tilde, float).reshape(n)
    z3d = np.asarray(z3_dot, float).reshape(n)
    kw = kappa * omega
    e_dot = (kw * system.Hc_bar @ e_bar
             + omega / kappa * system.W1_bar @ delta(3, kappa, n) @ z_bar
             + build_C2(n) @ Bu / kw)
    z_dot = (omega * system.Ho_bar @ z_bar
             + build_C0(n) @ Bu / omega
             + build_C1(n) @ z3d / omega ** 2)
    return e_dot, z_dot
