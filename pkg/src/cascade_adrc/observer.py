"""Extended state observer (ESO) for the position/velocity/total-disturbance state."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HURWITZ_MARGIN = 1e-9


def _diag_vec(k, n=None, name="gain"):
    arr = np.asarray(k, dtype=float)
    if arr.ndim == 2:
        if arr.shape[0] != arr.shape[1] or np.any(arr - np.diag(np.diag(arr)) != 0):
            raise ValueError(f"{name} must be a diagonal matrix")
        arr = np.diag(arr).copy()
    arr = np.atleast_1d(arr)
    if n is not None and arr.shape[0] != n:
        if arr.shape[0] == 1:
            arr = np.full(n, arr[0])
        else:
            raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class ObserverGains:
    """Diagonal ESO gains K1, K2, K3, stored as per-axis vectors.

    Construction rejects gains for which the observer error matrix is not
    Hurwitz.  The matrix decouples per axis into 3x3 companion blocks, so the
    check is done axis by axis.
    """

    K1: np.ndarray
    K2: np.ndarray
    K3: np.ndarray

    def __post_init__(self):
        k1 = _diag_vec(self.K1, name="K1")
        n = k1.shape[0]
        k2 = _diag_vec(self.K2, n, "K2")
        k3 = _diag_vec(self.K3, n, "K3")
        for i in range(n):
            eig = np.linalg.eigvals(np.array([[-k1[i], 1.0, 0.0], [-k2[i], 0.0, 1.0], [-k3[i], 0.0, 0.0]]))
            worst = eig[np.argmax(eig.real)]
            if worst.real >= -HURWITZ_MARGIN:
                raise ValueError(
                    f"observer gains on axis {i} give a non-Hurwitz error matrix "
                    f"(eigenvalue {worst:.6g})")
        object.__setattr__(self, "K1", k1)
        object.__setattr__(self, "K2", k2)
        object.__setattr__(self, "K3", k3)

    @property
    def n(self) -> int:
        return self.K1.shape[0]

    @property
    def stacked(self) -> np.ndarray:
        """``[K1; K2; K3]`` as a 3n-by-n matrix."""
        return np.vstack([np.diag(self.K1), np.diag(self.K2), np.diag(self.K3)])


def build_Ho(gains: ObserverGains) -> np.ndarray:
    """Observer error matrix ``[[-K1, I, 0], [-K2, 0, I], [-K3, 0, 0]]``."""
    n = gains.n
    I, Z = np.eye(n), np.zeros((n, n))
    return np.block([
        [-np.diag(gains.K1), I, Z],
        [-np.diag(gains.K2), Z, I],
        [-np.diag(gains.K3), Z, Z],
    ])


def build_C0(n: int) -> np.ndarray:
    """Selector ``[0, -I, 0]^T`` (3n-by-n)."""
    return np.vstack([np.zeros((n, n)), -np.eye(n), np.zeros((n, n))])


def build_C1(n: int) -> np.ndarray:
    """Selector ``[0, 0, I]^T`` (3n-by-n)."""
    return np.vstack([np.zeros((n, n)), np.zeros((n, n)), np.eye(n)])


@dataclass(frozen=True)
class ExtendedState:
    """Extended state ``(z1, z2, z3)`` with ``z3 = q + h - h_u``."""

    z1: np.ndarray
    z2: np.ndarray
    z3: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.z1, self.z2, self.z3])


def initial_estimate(z1_measured) -> np.ndarray:
    """Observer start: position from the measurement, velocity and disturbance zero."""
    z1 = np.atleast_1d(np.asarray(z1_measured, dtype=float))
    return np.concatenate([z1, np.zeros_like(z1), np.zeros_like(z1)])


def observer_derivative(gains: ObserverGains, z_hat, z1_measured, h_u, Bv) -> np.ndarray:
    """Time derivative of the estimate ``z_hat = (z1^, z2^, z3^)``."""
    n = gains.n
    z_hat = np.asarray(z_hat, dtype=float)
    if z_hat.shape != (3 * n,):
        raise ValueError(f"z_hat must have length {3 * n}")
    z1m, hu, bv = (np.asarray(a, dtype=float).reshape(-1) for a in (z1_measured, h_u, Bv))
    if not (z1m.shape == hu.shape == bv.shape == (n,)):
        raise ValueError(f"measurement, h_u and Bv must have length {n}")
    innov = z1m - z_hat[:n]
    return np.concatenate([
        gains.K1 * innov + z_hat[n:2 * n],
        gains.K2 * innov + z_hat[2 * n:] + hu + bv,
        gains.K3 * innov,
    ])


def observation_error_derivative(Ho, z_tilde, B_u_tilde, z3_dot) -> np.ndarray:
    """``Ho z~ + C0 B u~ + C1 z3'`` for the observation error ``z~ = z - z^``."""
    Ho = np.asarray(Ho, dtype=float)
    m = Ho.shape[0]
    if m % 3 or Ho.shape != (m, m):
        raise ValueError("Ho must be 3n-by-3n")
    n = m // 3
    z_tilde = np.asarray(z_tilde, dtype=float).reshape(-1)
    bu = np.asarray(B_u_tilde, dtype=float).reshape(-1)
    z3d = np.asarray(z3_dot, dtype=float).reshape(-1)
    if z_tilde.shape != (m,) or bu.shape != (n,) or z3d.shape != (n,):
        raise ValueError("observation_error_derivative: inconsistent dimensions")
    out = Ho @ z_tilde
    out[n:2 * n] -= bu
    out[2 * n:] += z3d
    return out
