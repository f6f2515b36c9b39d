"""Lyapunov certificate for the closed loop with input dynamics.

With the scaled error ``zeta_bar = (e_bar, z_bar, u~)`` and

    V = 1/2 e_bar' Pc e_bar + 1/2 z_bar' Po z_bar + 1/2 u~' u~

the derivative splits as ``V' = Y1 + Y2 + Y3 + Y4`` with the nominal part
``Y1 = -1/2 omega zeta' QY1 zeta`` and the perturbations bounded by
``a ||zeta|| + b ||zeta||^2``.  The resulting estimate

    V' <= -Lambda_V ||zeta||^2 + Gamma_V ||zeta||

certifies ultimate boundedness when ``Lambda_V > 0``.

Two bound families are computed.  The "printed" family follows the closed
forms as published.  The default family is re-derived from the same chain-rule
expansions and keeps every term, so that ``Gamma_V / Lambda_V`` is a sound
radius.  Matrix norms are spectral, vector norms Euclidean.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg as sla

from .control import CompensationMode, hu_rate_matrices
from .model import DisturbanceBounds, PlantModel
from .observer import build_C0, build_C1
from .scaling import ScaledSystem, build_C2, delta, scale_errors, scaled_error_derivatives

PD_REL_TOL = 1e-12
LYAP_RESIDUAL_TOL = 1e-10


def _norm(M) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


# ---------------------------------------------------------------------------
# Lyapunov equations
# ---------------------------------------------------------------------------


def solve_lyapunov(H, Q) -> np.ndarray:
    """Solve ``P H^T + H P + Q = 0`` for symmetric positive definite ``P``.

    Raises ``ValueError`` naming the offending eigenvalue when ``H`` is not
    Hurwitz, or when ``Q`` is not symmetric positive definite.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if H.shape[0] != H.shape[1] or Q.shape != H.shape:
        raise ValueError("H and Q must be square and of equal size")
    eig = np.linalg.eigvals(H)
    worst = eig[np.argmax(eig.real)]
    if worst.real >= 0:
        raise ValueError(f"H is not Hurwitz: eigenvalue {worst:.6g} has nonnegative real part")
    if np.max(np.abs(Q - Q.T)) > 1e-12 * max(1.0, np.max(np.abs(Q))):
        raise ValueError("Q must be symmetric")
    if not positive_definite(Q)[0]:
        raise ValueError("Q must be positive definite")
    P = sla.solve_continuous_lyapunov(H, -Q)
    return 0.5 * (P + P.T)


def lyapunov_residual(H, P, Q) -> float:
    """Max-abs residual of ``P H^T + H P + Q``."""
    return float(np.max(np.abs(P @ H.T + H @ P + Q)))


def positive_definite(M, rel_tol: float = PD_REL_TOL):
    """Return ``(is_pd, lambda_min, lambda_max)`` for a symmetric matrix.

    A Cholesky factorization decides first; the eigenvalues are always
    computed for reporting and must also satisfy
    ``lambda_min > rel_tol * lambda_max``.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    M = 0.5 * (M + M.T)
    try:
        np.linalg.cholesky(M)
        chol_ok = True
    except np.linalg.LinAlgError:
        chol_ok = False
    eig = np.linalg.eigvalsh(M)
    lmin, lmax = float(eig[0]), float(eig[-1])
    return bool(chol_ok and lmin > rel_tol * max(lmax, 0.0) and lmin > 0), lmin, lmax


def _as_weight(Q, m: int, name: str) -> np.ndarray:
    if Q is None:
        return np.eye(m)
    Q = np.asarray(Q, dtype=float)
    if Q.ndim == 0:
        return float(Q) * np.eye(m)
    if Q.shape != (m, m):
        raise ValueError(f"{name} must be a scalar or a {m}x{m} matrix")
    return Q


@dataclass(frozen=True)
class LyapunovPair:
    """Solutions for the tracking and observation error matrices.

    The pair satisfies ``H^T P + P H + Q = 0`` for ``(Hc_bar, Pc, Qc)`` and
    ``(Ho_bar, Po, Qo)``, which is the orientation the derivative of
    ``1/2 x' P x`` along ``x' = H x`` produces.  It is obtained from
    :func:`solve_lyapunov` applied to ``H^T``.
    """

    Pc: np.ndarray
    Qc: np.ndarray
    Po: np.ndarray
    Qo: np.ndarray
    residual_c: float = 0.0
    residual_o: float = 0.0

    @classmethod
    def for_system(cls, system: ScaledSystem, Qc=None, Qo=None) -> "LyapunovPair":
        n = system.n
        Qc = _as_weight(Qc, 2 * n, "Qc")
        Qo = _as_weight(Qo, 3 * n, "Qo")
        Pc = solve_lyapunov(system.Hc_bar.T, Qc)
        Po = solve_lyapunov(system.Ho_bar.T, Qo)
        rc = float(np.max(np.abs(system.Hc_bar.T @ Pc + Pc @ system.Hc_bar + Qc)))
        ro = float(np.max(np.abs(system.Ho_bar.T @ Po + Po @ system.Ho_bar + Qo)))
        for name, P in (("Pc", Pc), ("Po", Po)):
            if not positive_definite(P)[0]:
                raise ValueError(f"{name} is not positive definite")
        return cls(Pc, Qc, Po, Qo, rc, ro)

    def value(self, zeta_bar) -> np.ndarray:
        """``V(zeta_bar)`` for one vector or an array of samples (rows)."""
        z = np.atleast_2d(np.asarray(zeta_bar, dtype=float))
        nc, no = self.Pc.shape[0], self.Po.shape[0]
        e, zb, u = z[:, :nc], z[:, nc:nc + no], z[:, nc + no:]
        v = 0.5 * (np.einsum("ki,ij,kj->k", e, self.Pc, e)
                   + np.einsum("ki,ij,kj->k", zb, self.Po, zb)
                   + np.einsum("ki,ki->k", u, u))
        return v if np.ndim(zeta_bar) > 1 else v[0]


def lyapunov_pair(system: ScaledSystem, Qc=None, Qo=None) -> LyapunovPair:
    return LyapunovPair.for_system(system, Qc, Qo)


# ---------------------------------------------------------------------------
# Nominal term
# ---------------------------------------------------------------------------


def _BT(B, T, n):
    B = np.atleast_2d(np.asarray(B, dtype=float))
    T = np.asarray(T, dtype=float)
    if T.ndim <= 1:
        T = np.diag(np.broadcast_to(np.atleast_1d(T), (n,)))
    if B.shape != (n, n) or T.shape != (n, n):
        raise ValueError(f"B and T must be {n}x{n}")
    if np.any(np.diag(T) <= 0):
        raise ValueError("T-positivity invariant violated: time constants must be strictly positive")
    return B, T


def assemble_QY1(system: ScaledSystem, pair: LyapunovPair, omega: float, kappa: float, B, T) -> np.ndarray:
    """Symmetric 6n-by-6n matrix of the nominal term ``Y1 = -1/2 omega zeta' QY1 zeta``."""
    if not (omega > 0 and kappa > 0):
        raise ValueError("omega and kappa must be positive")
    n = system.n
    B, T = _BT(B, T, n)
    Binv, Tinv = np.linalg.inv(B), np.linalg.inv(T)
    d3k = delta(3, kappa, n)
    PcW1 = pair.Pc @ system.W1_bar @ d3k
    Q11 = kappa * pair.Qc
    Q12 = -PcW1 / kappa
    Q13 = (-pair.Pc @ build_C2(n) @ B / (kappa * omega ** 2)
           - kappa ** 3 * omega ** 2 * (Binv @ system.Kc_bar @ system.Hc_bar).T)
    Q22 = pair.Qo
    Q23 = (-pair.Po @ build_C0(n) @ B / omega ** 2
           - omega ** 2 * (Binv @ (kappa * system.Kc_bar @ system.W1_bar @ d3k
                                   + system.W2_bar @ d3k @ system.Ho_bar)).T)
    Q33 = 2.0 / omega * Tinv
    Q = np.block([[Q11, Q12, Q13], [Q12.T, Q22, Q23], [Q13.T, Q23.T, Q33]])
    return 0.5 * (Q + Q.T)


# ---------------------------------------------------------------------------
# Perturbation bounds
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundTerm:
    """Bound ``linear * ||zeta|| + quadratic * ||zeta||^2`` on one perturbation term."""

    linear: float
    quadratic: float


@dataclass(frozen=True)
class PerturbationBounds:
    """Bounds on Y2, Y31, Y32, Y4.

    ``Y31``, ``Y32``, ``Y4`` are the re-derived bounds; the ``*_printed``
    fields evaluate the published closed forms (``Y32_printed`` reuses the
    disturbance symbols exactly as published).
    """

    Y2: BoundTerm
    Y31: BoundTerm
    Y32: BoundTerm
    Y4: BoundTerm
    Y31_printed: BoundTerm
    Y32_printed: BoundTerm
    Y4_printed: BoundTerm

    def as_tuple(self):
        return self.Y2, self.Y31, self.Y32, self.Y4


@dataclass(frozen=True)
class TrajectoryBounds:
    x_b0: float = 0.0
    x_b1: float = 0.0
    x_b2: float = 0.0
    x_b3: float = 0.0

    @classmethod
    def of(cls, obj) -> "TrajectoryBounds":
        if isinstance(obj, TrajectoryBounds):
            return obj
        b = getattr(obj, "bounds", obj)
        return cls(*(float(x) for x in b))


def _aux(system: ScaledSystem, pair, db: DisturbanceBounds, omega, kappa, B, T):
    n = system.n
    B, T = _BT(B, T, n)
    kw = kappa * omega
    a = dict(
        nB=_norm(B), nBinv=_norm(np.linalg.inv(B)), nTinv=_norm(np.linalg.inv(T)),
        nHc=_norm(system.Hc_bar), nHo=_norm(system.Ho_bar), nW1=_norm(system.W1_bar),
        nW1k=_norm(system.W1_bar @ delta(3, kappa, n)), nC2B=_norm(build_C2(n) @ B),
        pC=_norm(pair.Po @ build_C1(n)),
        Wh2b=math.hypot(2 * db.h_1a + db.h_2a, kw * (2 * db.h_1b + db.h_2b)),
        Wh3b=math.hypot(db.h_1a, omega * db.h_1b),
        Wh5b=math.hypot(db.h_1a, kw * db.h_1b),
        Wq2b=math.hypot(db.q_z1, kw * db.q_z2),
    )
    # ||e_bar'|| <= a_e ||zeta||,  ||z_bar' without the z3' part|| <= a_z ||zeta||
    a["a_e"] = kw * a["nHc"] + omega / kappa * a["nW1k"] + a["nC2B"] / kw
    a["a_z"] = omega * a["nHo"] + a["nB"] / omega
    return a


def perturbation_bounds(system: ScaledSystem, pair: LyapunovPair, dist: DisturbanceBounds,
                        traj, omega: float, kappa: float, B, T) -> PerturbationBounds:
    """Bound coefficients for the perturbation terms of ``V'``."""
    tb = TrajectoryBounds.of(traj)
    d = dist
    a = _aux(system, pair, d, omega, kappa, B, T)
    w2, w3 = omega ** -2, omega ** -3
    pC = a["pC"]

    y2 = BoundTerm(a["nBinv"] * tb.x_b3, 0.0)
    h_ref = (2 * d.h_1a + 2 * d.h_2a) * tb.x_b1 + (2 * d.h_1b + 2 * d.h_2b) * tb.x_b2
    y31 = BoundTerm(w2 * pC * h_ref, w2 * pC * (a["Wh2b"] * a["a_e"] + a["Wh3b"] * a["a_z"]))
    y32 = BoundTerm(
        a["nBinv"] * ((d.h_1a + d.h_2a) * tb.x_b1 + (d.h_1b + d.h_2b) * tb.x_b2),
        a["nBinv"] * (a["Wh5b"] * a["a_e"] + a["Wh3b"] * a["a_z"]))
    y4 = BoundTerm(w2 * pC * (d.q_z1 * tb.x_b1 + d.q_z2 * tb.x_b2 + d.q_t),
                   w2 * pC * (a["Wq2b"] * a["a_e"] + d.q_u * a["nTinv"]))

    hcw = a["nHc"] + a["nW1"]
    y31p = BoundTerm(
        w2 * pC * h_ref,
        pC * (kappa / omega * a["Wh2b"] * hcw + w3 / kappa * a["Wh2b"] * a["nC2B"])
        + pC * (a["Wh3b"] * a["nHo"] / omega + w2 * a["nB"] * d.h_1b))
    y32p = BoundTerm(
        w2 * pC * (d.q_z1 * tb.x_b1 + d.q_z2 * tb.x_b2 + a["nB"] * d.q_z2
                   + a["nTinv"] * d.q_u + pC * d.q_t),
        kappa / omega * pC * a["Wq2b"] * hcw)
    y4p = BoundTerm(
        w2 * pC * (d.q_z1 * tb.x_b1 + d.q_z2 * tb.x_b2),
        pC * a["Wq2b"] / omega * (kappa * hcw + w2 / kappa * a["nC2B"])
        + w2 * pC * (a["nTinv"] * d.q_u + d.q_t))
    return PerturbationBounds(y2, y31, y32, y4, y31p, y32p, y4p)


@dataclass(frozen=True)
class LyapunovMeasures:
    """``Lambda_V``/``Gamma_V`` (re-derived, sound) and their published forms."""

    Lambda_V: float
    Gamma_V: float
    Lambda_V_printed: float
    Gamma_V_printed: float
    lambda_min_QY1: float

    @property
    def error_bound(self) -> float:
        return _ratio(self.Gamma_V, self.Lambda_V)

    @property
    def error_bound_printed(self) -> float:
        return _ratio(self.Gamma_V_printed, self.Lambda_V_printed)


def _ratio(g, l):
    return g / l if l > 0 else math.inf


def lyapunov_measures(system: ScaledSystem, pair: LyapunovPair, dist: DisturbanceBounds, traj,
                      omega: float, kappa: float, B, T, QY1=None) -> LyapunovMeasures:
    """Negative-definiteness margin and perturbation level of ``V'``."""
    if QY1 is None:
        QY1 = assemble_QY1(system, pair, omega, kappa, B, T)
    lam = float(np.linalg.eigvalsh(QY1)[0])
    pb = perturbation_bounds(system, pair, dist, traj, omega, kappa, B, T)
    terms = (pb.Y2, pb.Y31, pb.Y32, pb.Y4)
    Lam = 0.5 * omega * lam - sum(t.quadratic for t in terms)
    Gam = sum(t.linear for t in terms)

    tb = TrajectoryBounds.of(traj)
    d = dist
    a = _aux(system, pair, d, omega, kappa, B, T)
    hcw = a["nHc"] + a["nW1"]
    Lam_p = (0.5 * omega * lam
             - kappa * omega * a["nBinv"] * a["Wh5b"] * hcw
             - omega * a["nBinv"] * a["Wh3b"] * a["nHo"]
             - 2 * d.h_1b
             - a["Wh3b"] * a["nHo"] / omega
             - kappa / omega * a["pC"] * (a["Wh2b"] + a["Wq2b"]) * hcw
             - a["nB"] * d.h_1b / omega ** 2
             - a["Wh2b"] * a["nC2B"] / (omega ** 3 * kappa))
    Gam_p = (a["nBinv"] * ((d.h_2a + d.h_1a) * tb.x_b1 + (d.h_2b + d.h_1b) * tb.x_b2)
             + a["pC"] / omega ** 2 * (d.q_z1 * tb.x_b1 + d.q_z2 * tb.x_b2 + a["nB"] * d.q_z2
                                       + a["nTinv"] * d.q_u + a["pC"] * d.q_t))
    return LyapunovMeasures(float(Lam), float(Gam), float(Lam_p), float(Gam_p), lam)


# ---------------------------------------------------------------------------
# Certificate and feasible sets
# ---------------------------------------------------------------------------


@dataclass
class StabilityReport:
    omega: float
    kappa: float
    QY1: np.ndarray
    lambda_min_QY1: float
    Lambda_V: float
    Gamma_V: float
    Lambda_V_printed: float
    Gamma_V_printed: float
    conditions: dict
    error_bound: float
    error_bound_printed: float
    omega_feasible: list = field(default_factory=list)
    kappa_feasible: list = field(default_factory=list)
    lyapunov_residuals: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        """Practical-stability certificate: C1, C2 and ``Lambda_V > 0``."""
        return bool(self.conditions["C1"] and self.conditions["C2"] and self.Lambda_V > 0)

    def to_dict(self) -> dict:
        d = {
            "omega": self.omega, "kappa": self.kappa,
            "QY1": self.QY1.tolist(),
            "QY1_eigenvalues": np.linalg.eigvalsh(self.QY1).tolist(),
            "lambda_min_QY1": self.lambda_min_QY1,
            "Lambda_V": self.Lambda_V, "Gamma_V": self.Gamma_V,
            "error_bound": _json_float(self.error_bound),
            "Lambda_V_printed": self.Lambda_V_printed, "Gamma_V_printed": self.Gamma_V_printed,
            "error_bound_printed": _json_float(self.error_bound_printed),
            "conditions": dict(self.conditions), "certified": self.certified,
            "omega_feasible": [list(map(float, iv)) for iv in self.omega_feasible],
            "kappa_feasible": [list(map(float, iv)) for iv in self.kappa_feasible],
            "lyapunov_residuals": dict(self.lyapunov_residuals),
        }
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _json_float(x: float):
    return x if math.isfinite(x) else "inf"


def certify(system: ScaledSystem, B, T, omega: float, kappa: float, dist: DisturbanceBounds, traj,
            Qc=None, Qo=None, pair: Optional[LyapunovPair] = None) -> StabilityReport:
    """Evaluate conditions C1 (QY1 positive definite) and C2 (Gamma_V >= 0) at one point."""
    if pair is None:
        pair = LyapunovPair.for_system(system, Qc, Qo)
    Q = assemble_QY1(system, pair, omega, kappa, B, T)
    pd, lmin, _ = positive_definite(Q)
    m = lyapunov_measures(system, pair, dist, traj, omega, kappa, B, T, QY1=Q)
    return StabilityReport(
        omega=float(omega), kappa=float(kappa), QY1=Q, lambda_min_QY1=lmin,
        Lambda_V=m.Lambda_V, Gamma_V=m.Gamma_V,
        Lambda_V_printed=m.Lambda_V_printed, Gamma_V_printed=m.Gamma_V_printed,
        conditions={"C1": pd, "C2": bool(m.Gamma_V >= 0)},
        error_bound=m.error_bound, error_bound_printed=m.error_bound_printed,
        lyapunov_residuals={"c": pair.residual_c, "o": pair.residual_o},
    )


@dataclass(frozen=True)
class SweepPoint:
    omega: float
    kappa: float
    lambda_min_QY1: float
    Lambda_V: float
    Gamma_V: float
    bound: float
    C1: bool
    Lambda_V_printed: float
    Gamma_V_printed: float
    bound_printed: float


@dataclass
class FeasibleSets:
    omega_feasible: list
    kappa_feasible: list
    omega_sweep: list
    kappa_sweep: list


def log_grid(lo: float = 1e-3, hi: float = 1e3, points: int = 200) -> np.ndarray:
    if not (0 < lo < hi) or points < 2:
        raise ValueError("grid needs 0 < lo < hi and at least two points")
    return np.logspace(math.log10(lo), math.log10(hi), int(points))


def _sweep_point(system, pair, B, T, dist, traj, omega, kappa, rel_tol=PD_REL_TOL) -> SweepPoint:
    Q = assemble_QY1(system, pair, omega, kappa, B, T)
    pd, lmin, _ = positive_definite(Q, rel_tol)
    m = lyapunov_measures(system, pair, dist, traj, omega, kappa, B, T, QY1=Q)
    return SweepPoint(float(omega), float(kappa), lmin, m.Lambda_V, m.Gamma_V, m.error_bound, pd,
                      m.Lambda_V_printed, m.Gamma_V_printed, m.error_bound_printed)


def _intervals(grid: np.ndarray, flags: Sequence[bool], pred, iterations: int = 20) -> list:
    """Maximal runs of True in ``flags``, endpoints refined by log-space bisection."""
    out = []
    k = 0
    N = len(grid)
    while k < N:
        if not flags[k]:
            k += 1
            continue
        j = k
        while j + 1 < N and flags[j + 1]:
            j += 1
        lo = grid[k] if k == 0 else _bisect(grid[k - 1], grid[k], pred, iterations, inside_hi=True)
        hi = grid[j] if j == N - 1 else _bisect(grid[j], grid[j + 1], pred, iterations, inside_hi=False)
        out.append((float(lo), float(hi)))
        k = j + 1
    return out


def _bisect(a: float, b: float, pred, iterations: int, inside_hi: bool) -> float:
    """Boundary between ``a`` and ``b``; the feasible side is ``b`` if ``inside_hi``."""
    la, lb = math.log(a), math.log(b)
    for _ in range(iterations):
        mid = 0.5 * (la + lb)
        ok = pred(math.exp(mid))
        if ok == inside_hi:
            lb = mid
        else:
            la = mid
    return math.exp(lb if inside_hi else la)


def feasible_sets(system: ScaledSystem, B, T, dist: DisturbanceBounds, traj, kappa: float,
                  omega_grid=None, omega: Optional[float] = None, kappa_grid=None,
                  Qc=None, Qo=None, parallel: int = 1, iterations: int = 20,
                  rel_tol: float = PD_REL_TOL) -> FeasibleSets:
    """Intervals of omega (at ``kappa``) and of kappa (at ``omega``) where QY1 is positive definite.

    ``omega_grid`` defaults to 200 log-spaced points on [1e-3, 1e3]; each sign
    change of the definiteness test is refined by bisection.  The kappa sweep
    runs only when ``omega`` is given.  ``rel_tol`` is passed to
    :func:`positive_definite`; for very small T the block ``2/(omega T)``
    inflates ``lambda_max``, and a floor near ``m * eps`` may be needed.
    """
    pair = LyapunovPair.for_system(system, Qc, Qo)
    og = log_grid() if omega_grid is None else np.asarray(omega_grid, dtype=float)
    if og.size == 0 or np.any(og <= 0) or not np.all(np.isfinite(og)):
        raise ValueError("omega grid must be nonempty, positive and finite")

    def run(points):
        if parallel > 1:
            with ThreadPoolExecutor(max_workers=parallel) as ex:
                return list(ex.map(lambda p: _sweep_point(system, pair, B, T, dist, traj, *p, rel_tol), points))
        return [_sweep_point(system, pair, B, T, dist, traj, *p, rel_tol) for p in points]

    def pd_at(w, k):
        return positive_definite(assemble_QY1(system, pair, w, k, B, T), rel_tol)[0]

    o_sweep = run([(w, kappa) for w in og])
    o_int = _intervals(og, [p.C1 for p in o_sweep], lambda w: pd_at(w, kappa), iterations)

    k_sweep, k_int = [], []
    if omega is not None:
        kg = log_grid() if kappa_grid is None else np.asarray(kappa_grid, dtype=float)
        if kg.size == 0 or np.any(kg <= 0):
            raise ValueError("kappa grid must be nonempty and positive")
        k_sweep = run([(omega, k) for k in kg])
        k_int = _intervals(kg, [p.C1 for p in k_sweep], lambda k: pd_at(omega, k), iterations)
    return FeasibleSets(o_int, k_int, o_sweep, k_sweep)


# ---------------------------------------------------------------------------
# V' decomposition along a recorded trajectory
# ---------------------------------------------------------------------------


@dataclass
class VdotCheck:
    skipped: bool
    reason: str = ""
    max_residual: float = math.nan
    max_relative: float = math.nan
    times: Optional[np.ndarray] = None
    vdot_numeric: Optional[np.ndarray] = None
    terms: Optional[dict] = None


def vdot_terms(system: ScaledSystem, pair: LyapunovPair, model: PlantModel, mode, omega: float,
               kappa: float, t: float, x1, x2, u, z_hat, e_bar, z_bar, u_tilde, ref,
               QY1=None) -> dict:
    """Evaluate Y1, Y2, Y31, Y32, Y4 at one sample through the chain-rule expansions.

    ``ref`` holds ``xd`` and its first three derivatives at ``t``.
    """
    n = model.n
    B = model.B
    zeta = np.concatenate([e_bar, z_bar, u_tilde])
    if QY1 is None:
        QY1 = assemble_QY1(system, pair, omega, kappa, B, model.T)
    Y1 = -0.5 * omega * zeta @ QY1 @ zeta
    Binv = model.B_inv
    Y2 = u_tilde @ Binv @ ref[3]

    e_dot, z_dot = scaled_error_derivatives(system, e_bar, z_bar, u_tilde, np.zeros(n), omega, kappa, B)
    xr = np.concatenate([ref[1], ref[2]])
    kw = kappa * omega
    # h' = [Ha Hb][xd'; xd''] - [Ha, kw Hb] e_bar'
    Ha = model.h1.da(x1, x2, t) + model.h2.da(x1, x2, t)
    Hb = model.h1.db(x1, x2, t) + model.h2.db(x1, x2, t)
    W4, W5, W6 = hu_rate_matrices(mode, model, ref, z_hat, omega, kappa, t)
    Wh1 = np.hstack([Ha, Hb]) - W4
    Wh2 = np.hstack([Ha, kw * Hb]) - W5
    h_minus_hu_dot = Wh1 @ xr - Wh2 @ e_dot + W6 @ z_dot
    hu_dot = W4 @ xr - W5 @ e_dot - W6 @ z_dot

    PoC1 = pair.Po @ build_C1(n)
    Y31 = omega ** -2 * z_bar @ PoC1 @ h_minus_hu_dot
    Y32 = -u_tilde @ Binv @ hu_dot

    q = model.q
    Wq1 = np.hstack([q.dz1(x1, x2, u, t), q.dz2(x1, x2, u, t)])
    Wq2 = np.hstack([q.dz1(x1, x2, u, t), kw * q.dz2(x1, x2, u, t)])
    qdot = (Wq1 @ xr - Wq2 @ e_dot + q.du(x1, x2, u, t) @ (model.T_inv @ u_tilde)
            + q.dt(x1, x2, u, t))
    Y4 = omega ** -2 * z_bar @ PoC1 @ qdot
    return {"Y1": float(Y1), "Y2": float(Y2), "Y31": float(Y31), "Y32": float(Y32), "Y4": float(Y4)}


def vdot_decomposition_check(result, pair: LyapunovPair, system: ScaledSystem, model: PlantModel,
                             edge: int = 2) -> VdotCheck:
    """Compare numeric ``dV/dt`` with ``Y1 + Y2 + Y3 + Y4`` along a recorded run.

    ``result`` is a :class:`~cascade_adrc.sim.ScenarioResult` recorded at
    every integration step with rejection enabled.  Returns the maximum of
    ``|V'_num - sum Y| / (1 + |V'_num|)`` over interior samples.
    """
    cfg = result.config
    if not model.has_partials:
        return VdotCheck(True, "analytic partial derivatives of h1, h2 or q are missing")
    if not cfg.controller.rejection_enabled:
        return VdotCheck(True, "decomposition assumes disturbance rejection is enabled")
    if cfg.omega is None or cfg.kappa is None:
        return VdotCheck(True, "scaling parameters omega, kappa are required")
    omega, kappa = cfg.omega, cfg.kappa
    t = result.t
    if len(t) < 2 * max(edge, 2) + 1:
        return VdotCheck(True, "trajectory too short")
    dts = np.diff(t)
    if np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]:
        return VdotCheck(True, "samples must be uniformly spaced")
    zeta = result.zeta_bar
    V = pair.value(zeta)
    h = dts[0]
    # fourth-order five-point stencil; the second-order one is too coarse at 1e-4 s
    idx = np.arange(max(edge, 2), len(t) - max(edge, 2))
    vdot_num = (V[idx - 2] - 8 * V[idx - 1] + 8 * V[idx + 1] - V[idx + 2]) / (12 * h)
    refs = cfg.trajectory
    n = model.n
    total = np.empty(len(idx))
    names = ("Y1", "Y2", "Y31", "Y32", "Y4")
    cols = {k: np.empty(len(idx)) for k in names}
    QY1 = assemble_QY1(system, pair, omega, kappa, model.B, model.T)
    for j, k in enumerate(idx):
        ref = refs.sample(t[k])
        terms = vdot_terms(system, pair, model, cfg.controller.compensation_mode, omega, kappa, t[k],
                           result.x1[k], result.x2[k], result.u[k], result.z_hat[k],
                           zeta[k, :2 * n], zeta[k, 2 * n:5 * n], zeta[k, 5 * n:], ref, QY1)
        for key in names:
            cols[key][j] = terms[key]
        total[j] = sum(terms.values())
    resid = np.abs(vdot_num - total)
    rel = resid / (1.0 + np.abs(vdot_num))
    return VdotCheck(False, "", float(np.max(resid)), float(np.max(rel)), t[idx], vdot_num, cols)
