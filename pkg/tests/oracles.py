"""Independent reference computations used by the tests.

Nothing here calls into the package's stability or scaling code; each
function rebuilds its answer from first principles with plain numpy.
"""

import numpy as np


def kron_lyapunov(H, Q):
    """Solve ``P H^T + H P + Q = 0`` through the vectorized Kronecker system."""
    H = np.atleast_2d(np.asarray(H, float))
    Q = np.atleast_2d(np.asarray(Q, float))
    m = H.shape[0]
    I = np.eye(m)
    # vec(H P) = (I kron H) vec P, vec(P H^T) = (H kron I) vec P  (column-major vec)
    L = np.kron(I, H) + np.kron(H, I)
    p = np.linalg.solve(L, -Q.reshape(-1, order="F"))
    return p.reshape(m, m, order="F")


def linear_loop_matrix(B, T, Kp, Kd, K1, K2, K3):
    """Closed loop with zero reference, h = q = 0 and rejection on.

    State ``(x1, x2, u, z1_hat, z2_hat, z3_hat)``; returns ``(A, F)`` where
    ``F`` maps the state to the commanded input ``v``.
    """
    B = np.atleast_2d(np.asarray(B, float))
    n = B.shape[0]
    Binv = np.linalg.inv(B)
    Tinv = np.linalg.inv(np.diag(np.broadcast_to(np.asarray(T, float), (n,))))
    Kp, Kd, K1, K2, K3 = (np.diag(np.broadcast_to(np.asarray(k, float), (n,))) for k in (Kp, Kd, K1, K2, K3))
    Z, I = np.zeros((n, n)), np.eye(n)
    F = np.hstack([Z, Z, Z, -Binv @ Kp, -Binv @ Kd, -Binv])
    rows = [
        np.hstack([Z, I, Z, Z, Z, Z]),
        np.hstack([Z, Z, B, Z, Z, Z]),
        np.hstack([Z, Z, -Tinv, Z, Z, Z]) + Tinv @ F,
        np.hstack([K1, Z, Z, -K1, I, Z]),
        np.hstack([K2, Z, Z, -K2, Z, I]) + B @ F,
        np.hstack([K3, Z, Z, -K3, Z, Z]),
    ]
    return np.vstack(rows), F


def scaled_coordinates(F, n, omega, kappa):
    """Matrix ``S`` with ``zeta_bar = S x`` for the linear loop (z3 = 0)."""
    Z, I = np.zeros((n, n)), np.eye(n)
    kw = kappa * omega
    e1 = np.hstack([-I, Z, Z, Z, Z, Z])
    e2 = np.hstack([Z, -I, Z, Z, Z, Z]) / kw
    z1 = np.hstack([I, Z, Z, -I, Z, Z])
    z2 = np.hstack([Z, I, Z, Z, -I, Z]) / omega
    z3 = np.hstack([Z, Z, Z, Z, Z, -I]) / omega ** 2
    ut = F - np.hstack([Z, Z, I, Z, Z, Z])
    return np.vstack([e1, e2, z1, z2, z3, ut])


def polarize(value, m):
    """Symmetric matrix ``M`` with ``value(x) = x' M x`` recovered from evaluations."""
    E = np.eye(m)
    M = np.empty((m, m))
    for i in range(m):
        M[i, i] = value(E[i])
    for i in range(m):
        for j in range(i + 1, m):
            M[i, j] = M[j, i] = 0.5 * (value(E[i] + E[j]) - M[i, i] - M[j, j])
    return M


def qy1_oracle(value, B, T, Kp, Kd, K1, K2, K3, omega, kappa):
    """Nominal-term matrix from ``V' = zeta' (M A + A' M) zeta = -1/2 omega zeta' Q zeta``."""
    n = np.atleast_2d(B).shape[0]
    A, F = linear_loop_matrix(B, T, Kp, Kd, K1, K2, K3)
    S = scaled_coordinates(F, n, omega, kappa)
    Abar = S @ A @ np.linalg.inv(S)
    M = polarize(value, 6 * n)
    return -2.0 / omega * (M @ Abar + Abar.T @ M)


def trapezoid(y, dt):
    y = np.asarray(y, float)
    return float(dt * (0.5 * y[0] + y[1:-1].sum() + 0.5 * y[-1]))
