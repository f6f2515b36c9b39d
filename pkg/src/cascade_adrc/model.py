"""Plant family, reference trajectories and the known/unknown dynamics split.

The plant is

    x1' = x2
    x2' = B u + h1(x1, x2) + h2(x1, x2) + q(x1, x2, u, t)
    u'  = T^-1 (v - u)

where ``v`` is the commanded input and ``u`` the effective input after a
first-order lag.  Known dynamics components and the unknown disturbance are
small objects exposing a value and (optionally) analytic partial derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

FD_STEP = 1e-6


def _vec(x, n: Optional[int] = None, name: str = "vector") -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        if arr.shape[0] == 1:
            return np.full(n, arr[0])
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {n}")
    return arr


def _schedule(times, values, n: int, name: str):
    """Normalize a piecewise-constant schedule to sorted arrays (m,), (m, n)."""
    t = np.asarray(times, dtype=float).ravel()
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = np.repeat(vals[:, None], n, axis=1)
    if vals.shape != (t.shape[0], n):
        raise ValueError(f"{name}: schedule values must have shape ({t.shape[0]}, {n})")
    if t.shape[0] == 0:
        raise ValueError(f"{name}: schedule must not be empty")
    if np.any(np.diff(t) <= 0):
        raise ValueError(f"{name}: schedule times must be strictly increasing")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(vals))):
        raise ValueError(f"{name}: schedule entries must be finite")
    return t, vals


def schedule_value(times: np.ndarray, values: np.ndarray, t: float) -> np.ndarray:
    """Value of a step schedule at ``t``; the first entry also covers ``t < times[0]``."""
    j = int(np.searchsorted(times, t, side="right")) - 1
    return values[max(j, 0)]


# ---------------------------------------------------------------------------
# Known-dynamics components h(a, b)
# ---------------------------------------------------------------------------


class Component:
    """Known-dynamics term ``h(a, b)`` with optional analytic partials.

    Subclasses override :meth:`__call__` and, when available, :meth:`da` and
    :meth:`db` which return n-by-n Jacobians.  ``has_partials`` tells callers
    whether those are analytic.
    """

    has_partials = False

    def __init__(self, n: int):
        self.n = int(n)

    def __call__(self, a, b, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def da(self, a, b, t: float = 0.0) -> np.ndarray:
        return _fd_jacobian(lambda x: self(x, b, t), a)

    def db(self, a, b, t: float = 0.0) -> np.ndarray:
        return _fd_jacobian(lambda x: self(a, x, t), b)

    def partial_bounds(self) -> Optional[tuple]:
        """Global bounds (on ||dh/da||, ||dh/db||) when known in closed form."""
        return None

    def evaluate_many(self, a, b, t) -> np.ndarray:
        """Row-wise evaluation for sample arrays of shape (N, n) and times (N,)."""
        return np.array([self(ai, bi, ti) for ai, bi, ti in zip(a, b, t)]).reshape(len(t), self.n)


class ZeroComponent(Component):
    """The identically zero component."""

    has_partials = True

    def __call__(self, a, b, t=0.0):
        return np.zeros(self.n)

    def da(self, a, b, t=0.0):
        return np.zeros((self.n, self.n))

    def db(self, a, b, t=0.0):
        return np.zeros((self.n, self.n))

    def partial_bounds(self):
        return 0.0, 0.0

    def evaluate_many(self, a, b, t):
        return np.zeros((len(t), self.n))


class TanhFriction(Component):
    """Smooth Coulomb-like friction ``f_c * tanh(f_t * b)`` per axis.

    Args:
        coefficient: f_c per axis (scalar broadcast).  Its sign is kept as
            given, so a dissipative friction acting on the velocity needs a
            negative coefficient.
        steepness: f_t per axis.
        n: number of axes.
        schedule: optional ``(times, values)`` step schedule overriding the
            coefficient from each listed time on (manual retuning).
    """

    has_partials = True

    def __init__(self, coefficient, steepness, n: int = 1, schedule=None):
        super().__init__(n)
        self.steepness = _vec(steepness, n, "steepness")
        if np.any(self.steepness < 0):
            raise ValueError("friction steepness must be nonnegative")
        coeff = _vec(coefficient, n, "coefficient")
        if schedule is None:
            self.times = np.array([0.0])
            self.values = coeff[None, :].copy()
        else:
            self.times, self.values = _schedule(schedule[0], schedule[1], n, "friction")

    @property
    def coefficient(self) -> np.ndarray:
        return self.values[0]

    def coefficient_at(self, t: float) -> np.ndarray:
        return schedule_value(self.times, self.values, t)

    def __call__(self, a, b, t=0.0):
        return self.coefficient_at(t) * np.tanh(self.steepness * np.asarray(b, dtype=float))

    def da(self, a, b, t=0.0):
        return np.zeros((self.n, self.n))

    def db(self, a, b, t=0.0):
        th = np.tanh(self.steepness * np.asarray(b, dtype=float))
        return np.diag(self.coefficient_at(t) * self.steepness * (1.0 - th * th))

    def partial_bounds(self):
        return 0.0, float(np.max(np.abs(self.values) * self.steepness))

    def evaluate_many(self, a, b, t):
        t = np.asarray(t, dtype=float)
        j = np.maximum(np.searchsorted(self.times, t, side="right") - 1, 0)
        return self.values[j] * np.tanh(self.steepness * np.asarray(b, dtype=float))


class CallableComponent(Component):
    """Wraps user callables ``fn(a, b)`` and optional Jacobians ``da(a, b)``, ``db(a, b)``."""

    def __init__(self, n: int, fn: Callable, da: Optional[Callable] = None, db: Optional[Callable] = None):
        super().__init__(n)
        self._fn, self._da, self._db = fn, da, db
        self.has_partials = da is not None and db is not None

    def __call__(self, a, b, t=0.0):
        return _vec(self._fn(np.asarray(a, float), np.asarray(b, float)), self.n, "h")

    def da(self, a, b, t=0.0):
        if self._da is None:
            return super().da(a, b, t)
        return np.atleast_2d(np.asarray(self._da(np.asarray(a, float), np.asarray(b, float)), float))

    def db(self, a, b, t=0.0):
        if self._db is None:
            return super().db(a, b, t)
        return np.atleast_2d(np.asarray(self._db(np.asarray(a, float), np.asarray(b, float)), float))


# ---------------------------------------------------------------------------
# Unknown disturbance q(z1, z2, u, t)
# ---------------------------------------------------------------------------


class Disturbance:
    """Unknown disturbance ``q(z1, z2, u, t)``; partials default to central differences."""

    has_partials = False

    def __init__(self, n: int):
        self.n = int(n)

    def __call__(self, z1, z2, u, t) -> np.ndarray:
        raise NotImplementedError

    def dz1(self, z1, z2, u, t):
        return _fd_jacobian(lambda x: self(x, z2, u, t), z1)

    def dz2(self, z1, z2, u, t):
        return _fd_jacobian(lambda x: self(z1, x, u, t), z2)

    def du(self, z1, z2, u, t):
        return _fd_jacobian(lambda x: self(z1, z2, x, t), u)

    def dt(self, z1, z2, u, t):
        return (self(z1, z2, u, t + FD_STEP) - self(z1, z2, u, t - FD_STEP)) / (2 * FD_STEP)

    def partial_bounds(self) -> Optional[tuple]:
        """Closed-form bounds (q_z1, q_z2, q_u, q_t) when known."""
        return None

    def evaluate_many(self, z1, z2, u, t) -> np.ndarray:
        """Row-wise evaluation for sample arrays of shape (N, n) and times (N,)."""
        rows = [self(a, b, c, ti) for a, b, c, ti in zip(z1, z2, u, t)]
        return np.array(rows).reshape(len(t), self.n)


class ParametricDisturbance(Disturbance):
    """Friction mismatch plus a constant offset plus a sinusoid, per axis.

    ``q = friction(z2) + offset + amplitude * sin(frequency * t)``.  The friction
    part models the gap between the true friction and its known model.
    """

    has_partials = True

    def __init__(self, n: int = 1, offset=0.0, amplitude=0.0, frequency=0.0,
                 friction: Optional[TanhFriction] = None):
        super().__init__(n)
        self.offset = _vec(offset, n, "offset")
        self.amplitude = _vec(amplitude, n, "amplitude")
        self.frequency = _vec(frequency, n, "frequency")
        if friction is not None and friction.n != n:
            raise ValueError("friction mismatch component has the wrong dimension")
        self.friction = friction

    def __call__(self, z1, z2, u, t):
        out = self.offset + self.amplitude * np.sin(self.frequency * t)
        if self.friction is not None:
            out = self.friction(z1, z2, t) + out
        return out

    def dz1(self, z1, z2, u, t):
        return np.zeros((self.n, self.n))

    def dz2(self, z1, z2, u, t):
        if self.friction is None:
            return np.zeros((self.n, self.n))
        return self.friction.db(z1, z2, t)

    def du(self, z1, z2, u, t):
        return np.zeros((self.n, self.n))

    def dt(self, z1, z2, u, t):
        return self.amplitude * self.frequency * np.cos(self.frequency * t)

    def evaluate_many(self, z1, z2, u, t):
        t = np.asarray(t, dtype=float)[:, None]
        out = self.offset + self.amplitude * np.sin(self.frequency * t)
        if self.friction is not None:
            out = self.friction.evaluate_many(z1, z2, t[:, 0]) + out
        return out

    def partial_bounds(self):
        qz2 = 0.0 if self.friction is None else self.friction.partial_bounds()[1]
        qt = float(np.linalg.norm(self.amplitude * self.frequency))
        return 0.0, qz2, 0.0, qt


class CallableDisturbance(Disturbance):
    """Wraps ``fn(z1, z2, u, t)`` with optional analytic partials."""

    def __init__(self, n: int, fn: Callable, dz1=None, dz2=None, du=None, dt=None):
        super().__init__(n)
        self._fn = fn
        self._parts = {"dz1": dz1, "dz2": dz2, "du": du, "dt": dt}
        self.has_partials = all(p is not None for p in self._parts.values())

    def __call__(self, z1, z2, u, t):
        return _vec(self._fn(np.asarray(z1, float), np.asarray(z2, float), np.asarray(u, float), t),
                    self.n, "q")

    def _part(self, key, fallback, z1, z2, u, t):
        fn = self._parts[key]
        if fn is None:
            return fallback(z1, z2, u, t)
        return np.asarray(fn(np.asarray(z1, float), np.asarray(z2, float), np.asarray(u, float), t), float)

    def dz1(self, z1, z2, u, t):
        return np.atleast_2d(self._part("dz1", super().dz1, z1, z2, u, t))

    def dz2(self, z1, z2, u, t):
        return np.atleast_2d(self._part("dz2", super().dz2, z1, z2, u, t))

    def du(self, z1, z2, u, t):
        return np.atleast_2d(self._part("du", super().du, z1, z2, u, t))

    def dt(self, z1, z2, u, t):
        return _vec(self._part("dt", super().dt, z1, z2, u, t), self.n, "dq/dt")


def _fd_jacobian(fn: Callable, x, step: float = FD_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.shape[0]):
        dx = np.zeros_like(x)
        dx[j] = step
        cols.append((fn(x + dx) - fn(x - dx)) / (2 * step))
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# Plant
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DisturbanceBounds:
    """Bounds on the partial derivatives of h1, h2 and q."""

    h_1a: float = 0.0
    h_1b: float = 0.0
    h_2a: float = 0.0
    h_2b: float = 0.0
    q_z1: float = 0.0
    q_z2: float = 0.0
    q_u: float = 0.0
    q_t: float = 0.0

    def __post_init__(self):
        for name, val in self.as_dict().items():
            if not np.isfinite(val) or val < 0:
                raise ValueError(f"disturbance bound {name} must be finite and nonnegative, got {val}")

    def as_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in
                ("h_1a", "h_1b", "h_2a", "h_2b", "q_z1", "q_z2", "q_u", "q_t")}


@dataclass(frozen=True)
class PlantModel:
    """Second-order fully actuated plant with first-order input dynamics.

    ``B`` must be nonsingular and ``T`` diagonal positive; ``T`` may be given
    as a vector of time constants.
    """

    B: np.ndarray
    T: np.ndarray
    h1: Component = None
    h2: Component = None
    q: Disturbance = None
    B_inv: np.ndarray = field(init=False, repr=False)
    T_inv: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError(f"B must be square, got shape {B.shape}")
        n = B.shape[0]
        if not np.all(np.isfinite(B)):
            raise ValueError("B must be finite")
        sv = np.linalg.svd(B, compute_uv=False)
        if sv[-1] < 1e-12 * sv[0] or sv[0] == 0.0:
            raise ValueError("B is singular: smallest singular value below 1e-12 times the largest")
        T = np.asarray(self.T, dtype=float)
        if T.ndim <= 1:
            T = np.diag(_vec(T, n, "T"))
        if T.shape != (n, n):
            raise ValueError(f"T must be {n}x{n}, got shape {T.shape}")
        if np.any(T - np.diag(np.diag(T)) != 0):
            raise ValueError("T must be diagonal")
        if not np.all(np.isfinite(T)) or np.any(np.diag(T) <= 0):
            raise ValueError("T-positivity invariant violated: time constants must be strictly positive")
        h1 = self.h1 if self.h1 is not None else ZeroComponent(n)
        h2 = self.h2 if self.h2 is not None else ZeroComponent(n)
        q = self.q if self.q is not None else ParametricDisturbance(n)
        for name, comp in (("h1", h1), ("h2", h2), ("q", q)):
            if comp.n != n:
                raise ValueError(f"{name} has dimension {comp.n}, plant has {n}")
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "h1", h1)
        object.__setattr__(self, "h2", h2)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "B_inv", np.linalg.inv(B))
        object.__setattr__(self, "T_inv", np.diag(1.0 / np.diag(T)))

    @property
    def n(self) -> int:
        return self.B.shape[0]

    def h(self, a, b, t: float = 0.0) -> np.ndarray:
        """Total known dynamics ``h1 + h2``."""
        return self.h1(a, b, t) + self.h2(a, b, t)

    @property
    def has_partials(self) -> bool:
        return self.h1.has_partials and self.h2.has_partials and self.q.has_partials

    def disturbance_bounds(self) -> Optional[DisturbanceBounds]:
        """Closed-form bounds from the components, or None if any is unknown."""
        b1, b2, bq = self.h1.partial_bounds(), self.h2.partial_bounds(), self.q.partial_bounds()
        if b1 is None or b2 is None or bq is None:
            return None
        return DisturbanceBounds(b1[0], b1[1], b2[0], b2[1], *bq)


def plant_derivative(model: PlantModel, x1, x2, u, v, t: float = 0.0):
    """Return ``(x1', x2', u')`` for the plant with input lag."""
    n = model.n
    x1, x2, u, v = (_vec(a, None, nm) for a, nm in ((x1, "x1"), (x2, "x2"), (u, "u"), (v, "v")))
    for nm, a in (("x1", x1), ("x2", x2), ("u", u), ("v", v)):
        if a.shape[0] != n:
            raise ValueError(f"{nm} has length {a.shape[0]}, expected {n}")
    x2dot = model.B @ u + model.h1(x1, x2, t) + model.h2(x1, x2, t) + model.q(x1, x2, u, t)
    udot = model.T_inv @ (v - u)
    return x2.copy(), x2dot, udot


def tracking_error(xd, xd_dot, x1, x2) -> np.ndarray:
    """Stacked tracking error ``(xd - x1, xd_dot - x2)``."""
    xd, xd_dot, x1, x2 = (_vec(a) for a in (xd, xd_dot, x1, x2))
    n = xd.shape[0]
    if not (xd_dot.shape[0] == x1.shape[0] == x2.shape[0] == n):
        raise ValueError("tracking_error: inconsistent dimensions")
    return np.concatenate([xd - x1, xd_dot - x2])


# ---------------------------------------------------------------------------
# Reference trajectories
# ---------------------------------------------------------------------------


class ReferenceTrajectory:
    """Analytic reference ``xd(t)`` with three derivatives and norm bounds.

    ``bounds`` holds ``(x_b0, x_b1, x_b2, x_b3)``.
    """

    def __init__(self, xd: Callable, xd_dot: Callable, xd_ddot: Callable, xd_dddot: Callable,
                 bounds: Sequence[float], n: int):
        self.n = int(n)
        self._fns = (xd, xd_dot, xd_ddot, xd_dddot)
        b = np.asarray(bounds, dtype=float)
        if b.shape != (4,) or np.any(b < 0) or not np.all(np.isfinite(b)):
            raise ValueError("trajectory bounds must be four finite nonnegative numbers")
        self.bounds = b

    def xd(self, t):
        return _vec(self._fns[0](t), self.n, "xd")

    def xd_dot(self, t):
        return _vec(self._fns[1](t), self.n, "xd_dot")

    def xd_ddot(self, t):
        return _vec(self._fns[2](t), self.n, "xd_ddot")

    def xd_dddot(self, t):
        return _vec(self._fns[3](t), self.n, "xd_dddot")

    def sample(self, t: float) -> np.ndarray:
        """Array of shape (4, n): xd and its first three derivatives at ``t``."""
        return np.vstack([self.xd(t), self.xd_dot(t), self.xd_ddot(t), self.xd_dddot(t)])

    def sample_many(self, times) -> np.ndarray:
        """Array of shape (4, len(times), n)."""
        return np.stack([self.sample(t) for t in np.asarray(times, float)], axis=1)

    def check_bounds(self, times, rtol: float = 1e-12) -> list:
        """Indices k for which a sampled derivative norm exceeds x_bk."""
        s = self.sample_many(times)
        norms = np.linalg.norm(s, axis=2).max(axis=1)
        return [k for k in range(4) if norms[k] > self.bounds[k] * (1 + rtol) + 1e-300]


class SineReference(ReferenceTrajectory):
    """Per-axis ``A sin(W t)`` reference with closed-form derivatives."""

    def __init__(self, amplitude, angular_frequency, n: int = 1):
        amp = _vec(amplitude, n, "amplitude")
        freq = _vec(angular_frequency, n, "angular_frequency")
        if np.any(amp < 0):
            raise ValueError("amplitude must be nonnegative")
        if np.any(freq <= 0):
            raise ValueError("angular_frequency must be positive")
        self.amplitude, self.angular_frequency = amp, freq
        bounds = [float(np.linalg.norm(amp * freq ** k)) for k in range(4)]
        super().__init__(
            lambda t: amp * np.sin(freq * t),
            lambda t: amp * freq * np.cos(freq * t),
            lambda t: -amp * freq ** 2 * np.sin(freq * t),
            lambda t: -amp * freq ** 3 * np.cos(freq * t),
            bounds, n)

    def sample(self, t):
        s, c = np.sin(self.angular_frequency * t), np.cos(self.angular_frequency * t)
        a, w = self.amplitude, self.angular_frequency
        return np.vstack([a * s, a * w * c, -a * w * w * s, -a * w * w * w * c])

    def sample_many(self, times):
        t = np.asarray(times, dtype=float)[:, None]
        a, w = self.amplitude, self.angular_frequency
        s, c = np.sin(w * t), np.cos(w * t)
        return np.stack([a * s, a * w * c, -a * w * w * s, -a * w * w * w * c])


def sine_reference(amplitude, angular_frequency, n: int = 1) -> SineReference:
    """Sinusoidal reference on every axis; bounds are ``x_bk = |A W^k|``."""
    return SineReference(amplitude, angular_frequency, n)


# ---------------------------------------------------------------------------
# Assumption checks
# ---------------------------------------------------------------------------


def validate_bounds(model: PlantModel, bounds: DisturbanceBounds, samples, tol: float = 1e-6) -> list:
    """Check that ``bounds`` dominate the partials of h1, h2, q at sample points.

    ``samples`` is an iterable of ``(x1, x2, u, t)`` tuples.  Partials are
    analytic where the components provide them and central differences
    (step 1e-6) otherwise.  Returns a list of ``(name, sample_index, value)``
    for each violation beyond ``tol``.
    """
    norm = lambda m: float(np.linalg.norm(np.atleast_2d(m), 2))
    bad = []
    for k, (x1, x2, u, t) in enumerate(samples):
        checks = {
            "h_1a": norm(model.h1.da(x1, x2, t)),
            "h_1b": norm(model.h1.db(x1, x2, t)),
            "h_2a": norm(model.h2.da(x1, x2, t)),
            "h_2b": norm(model.h2.db(x1, x2, t)),
            "q_z1": norm(model.q.dz1(x1, x2, u, t)),
            "q_z2": norm(model.q.dz2(x1, x2, u, t)),
            "q_u": norm(model.q.du(x1, x2, u, t)),
            "q_t": float(np.linalg.norm(model.q.dt(x1, x2, u, t))),
        }
        for name, val in checks.items():
            if val > getattr(bounds, name) + tol:
                bad.append((name, k, val))
    return bad
