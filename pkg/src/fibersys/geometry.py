"""Numerical substrate: fiber models, vector fields, curves, RK4 flows, brackets.

Points are plain float arrays.  Vector fields are vectorised over leading
axes: ``field(p)`` accepts shape ``(..., n)`` and returns the same shape.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, DomainError, EscapeDetected

BLOWUP_BOUND = 1e8
FD_STEP = 1e-5


def default_steps() -> int:
    """Integrator resolution (steps per unit time); ``FIBERSYS_STEPS`` overrides."""
    raw = os.environ.get("FIBERSYS_STEPS")
    if raw:
        try:
            value = int(raw)
        except ValueError:
            value = 0
        if value >= 1:
            return value
    return 1000


def as_point(coords, dim: Optional[int] = None) -> np.ndarray:
    p = np.asarray(coords, dtype=float)
    if p.ndim == 0:
        p = p.reshape(1)
    if dim is not None and p.shape[-1] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {p.shape[-1]}")
    if not np.all(np.isfinite(p)):
        raise DomainError("non-finite coordinates")
    return p


# ---------------------------------------------------------------------------
# fiber models


class Fiber:
    """Standard fiber model.  ``dim`` is the number of ambient coordinates."""

    dim: int
    kind: str = "abstract"

    def contains(self, s: np.ndarray) -> bool:
        raise NotImplementedError

    def project(self, s: np.ndarray) -> np.ndarray:
        return s

    def diff(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.asarray(a) - np.asarray(b)

    def tangent_basis(self, s: np.ndarray) -> np.ndarray:
        """Columns span the tangent space at ``s`` (ambient coordinates)."""
        return np.eye(self.dim)

    def perturb(self, s: np.ndarray, direction: np.ndarray, eps: float) -> np.ndarray:
        return s + eps * direction

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        raise NotImplementedError

    def restricted(self, predicate: Callable[[np.ndarray], bool], label: str = "restricted"):
        return RestrictedFiber(self, predicate, label)


class EuclideanFiber(Fiber):
    kind = "euclidean"

    def __init__(self, dim: int, sample_radius: float = 2.0):
        self.dim = int(dim)
        self.sample_radius = sample_radius

    def contains(self, s):
        s = np.asarray(s)
        return s.shape[-1] == self.dim and bool(np.all(np.isfinite(s)))

    def sample(self, rng, n):
        r = self.sample_radius
        return rng.uniform(-r, r, size=(n, self.dim))

    def __repr__(self):
        return f"EuclideanFiber({self.dim})"


class TorusFiber(Fiber):
    """Flat torus R^k / (period Z)^k; coordinates are wrapped into [0, period)."""

    kind = "torus"

    def __init__(self, dim: int, period: float = 2 * math.pi):
        self.dim = int(dim)
        self.period = float(period)

    def contains(self, s):
        s = np.asarray(s)
        return s.shape[-1] == self.dim and bool(np.all(np.isfinite(s)))

    def project(self, s):
        return np.mod(s, self.period)

    def diff(self, a, b):
        d = np.asarray(a) - np.asarray(b)
        return d - self.period * np.round(d / self.period)

    def sample(self, rng, n):
        return rng.uniform(0.0, self.period, size=(n, self.dim))


class SphereFiber(Fiber):
    """Unit sphere S^2 embedded in R^3; states are renormalised after each step."""

    kind = "sphere"
    dim = 3

    def contains(self, s):
        s = np.asarray(s)
        if s.shape[-1] != 3 or not np.all(np.isfinite(s)):
            return False
        return bool(np.all(np.abs(np.linalg.norm(s, axis=-1) - 1.0) < 1e-6))

    def project(self, s):
        return s / np.linalg.norm(s, axis=-1, keepdims=True)

    def tangent_basis(self, s):
        s = np.asarray(s, dtype=float)
        a = np.array([1.0, 0.0, 0.0]) if abs(s[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        t1 = a - s * (a @ s)
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(s, t1)
        return np.column_stack([t1, t2])

    def perturb(self, s, direction, eps):
        # geodesic step so perturbed points stay on the sphere
        d = direction - s * (direction @ s)
        nd = np.linalg.norm(d)
        if nd == 0.0:
            return s.copy()
        return math.cos(eps * nd) * s + math.sin(eps * nd) * d / nd

    def sample(self, rng, n):
        x = rng.normal(size=(n, 3))
        return x / np.linalg.norm(x, axis=1, keepdims=True)


class RestrictedFiber(Fiber):
    """Open subset of a parent fiber cut out by a predicate."""

    def __init__(self, parent: Fiber, predicate: Callable[[np.ndarray], bool], label: str):
        self.parent = parent
        self.predicate = predicate
        self.label = label
        self.dim = parent.dim
        self.kind = parent.kind

    def contains(self, s):
        if not self.parent.contains(s):
            return False
        s = np.asarray(s)
        if s.ndim == 1:
            return bool(self.predicate(s))
        return all(bool(self.predicate(row)) for row in s.reshape(-1, self.dim))

    def project(self, s):
        return self.parent.project(s)

    def diff(self, a, b):
        return self.parent.diff(a, b)

    def tangent_basis(self, s):
        return self.parent.tangent_basis(s)

    def perturb(self, s, direction, eps):
        return self.parent.perturb(s, direction, eps)

    def sample(self, rng, n):
        out = []
        tries = 0
        while len(out) < n and tries < 200:
            cand = self.parent.sample(rng, max(4 * n, 64))
            out.extend(c for c in cand if self.predicate(c))
            tries += 1
        return np.array(out[:n]).reshape(-1, self.dim)

    def __repr__(self):
        return f"RestrictedFiber({self.parent!r}, {self.label})"


# ---------------------------------------------------------------------------
# vector fields


@dataclass(frozen=True)
class VectorField:
    """Autonomous vector field on a coordinate domain.

    ``jacobian`` is optional; when absent, brackets fall back on central
    differences.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    dim: int
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __call__(self, p):
        return self.eval(np.asarray(p, dtype=float))


def affine_field(A, b=None) -> VectorField:
    """The field ``s -> A s + b`` with its exact jacobian."""
    A = np.array(A, dtype=float)
    k = A.shape[0]
    b = np.zeros(k) if b is None else np.array(b, dtype=float)
    A.setflags(write=False)
    b.setflags(write=False)

    def f(s):
        return s @ A.T + b

    return VectorField(f, k, lambda s: A.copy())


def constant_field(v) -> VectorField:
    v = np.asarray(v, dtype=float)
    return affine_field(np.zeros((v.size, v.size)), v)


@dataclass(frozen=True)
class TimeDependentField:
    eval: Callable[[float, np.ndarray], np.ndarray]
    dim: int

    def __call__(self, t, p):
        return self.eval(float(t), np.asarray(p, dtype=float))


def fd_jacobian(f: Callable[[np.ndarray], np.ndarray], p: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central-difference jacobian with step scaled by ``max(1, |p|_inf)``."""
    p = np.asarray(p, dtype=float)
    h = step * max(1.0, float(np.max(np.abs(p))) if p.size else 1.0)
    cols = []
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h
        cols.append((np.asarray(f(p + e)) - np.asarray(f(p - e))) / (2 * h))
    return np.column_stack(cols)


def field_jacobian(X: VectorField, p: np.ndarray, fd_step: float = FD_STEP) -> np.ndarray:
    if X.jacobian is not None:
        return np.asarray(X.jacobian(p), dtype=float)
    return fd_jacobian(X.eval, p, fd_step)


def lie_bracket(X: VectorField, Y: VectorField, at, fd_step: float = FD_STEP,
                domain: Optional[Callable[[np.ndarray], bool]] = None) -> np.ndarray:
    """``[X, Y](p) = DY(p) X(p) - DX(p) Y(p)``."""
    p = as_point(at)
    if X.dim != Y.dim or p.shape[-1] != X.dim:
        raise DimensionMismatch("fields and point must share a dimension")
    if domain is not None and not domain(p):
        raise DomainError(f"point {p} outside the field domain")
    xv = np.asarray(X(p))
    yv = np.asarray(Y(p))
    return field_jacobian(Y, p, fd_step) @ xv - field_jacobian(X, p, fd_step) @ yv


# ---------------------------------------------------------------------------
# integration


@dataclass
class FlowResult:
    point: np.ndarray
    error_estimate: float
    times: np.ndarray
    path: np.ndarray


def _escaped(y, fiber: Optional[Fiber], blowup: float) -> Optional[str]:
    if not np.all(np.isfinite(y)):
        return "blowup"
    if np.max(np.abs(y)) > blowup:
        return "blowup"
    if fiber is not None and not fiber.contains(y):
        return "domain"
    return None


def _rk4_step(f, t, y, h, fiber):
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = f(t, y)
        k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(t + h, y + h * k3)
        y_new = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    if fiber is not None and np.all(np.isfinite(y_new)):
        y_new = fiber.project(y_new)
    return y_new


def _rk4_run(f, y0, t0, t1, steps, fiber, blowup, record=True):
    h = (t1 - t0) / steps
    y = np.array(y0, dtype=float)
    path = [y] if record else None
    for i in range(steps):
        t = t0 + i * h
        y_new = _rk4_step(f, t, y, h, fiber)
        reason = _escaped(y_new, fiber, blowup)
        if reason is not None:
            # bisect on the fraction of the step that stays admissible
            lo, hi = 0.0, 1.0
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if _escaped(_rk4_step(f, t, y, mid * h, fiber), fiber, blowup) is None:
                    lo = mid
                else:
                    hi = mid
            t_esc = t + lo * h
            raise EscapeDetected(t_esc, _rk4_step(f, t, y, lo * h, fiber), reason)
        y = y_new
        if record:
            path.append(y)
    times = t0 + h * np.arange(steps + 1)
    return y, times, (np.array(path) if record else None)


def solve(f: Callable[[float, np.ndarray], np.ndarray], y0, t0: float, t1: float, steps: int,
          fiber: Optional[Fiber] = None, blowup: float = BLOWUP_BOUND,
          estimate: bool = True) -> FlowResult:
    """Fixed-step RK4 for ``y' = f(t, y)`` with a step-doubling error estimate.

    Raises EscapeDetected if the state leaves ``fiber`` or exceeds ``blowup``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    y0 = np.asarray(y0, dtype=float)
    if fiber is not None and not fiber.contains(y0):
        raise DomainError(f"start point {y0} outside the fiber domain")
    y, times, path = _rk4_run(f, y0, t0, t1, steps, fiber, blowup)
    err = 0.0
    if estimate and t1 != t0:
        coarse_steps = steps // 2 if steps >= 2 else 1
        fine_steps = steps if steps >= 2 else 2
        try:
            if steps >= 2:
                yc, _, _ = _rk4_run(f, y0, t0, t1, coarse_steps, fiber, blowup, record=False)
                yf = y
            else:
                yc = y
                yf, _, _ = _rk4_run(f, y0, t0, t1, fine_steps, fiber, blowup, record=False)
            ratio = fine_steps / coarse_steps
            d = fiber.diff(yf, yc) if fiber is not None else yf - yc
            err = float(np.max(np.abs(d))) / (ratio ** 4 - 1.0)
        except EscapeDetected:
            err = math.inf
    return FlowResult(y, err, times, path)


def integrate_flow(field, start, t0: float, t1: float, steps: Optional[int] = None,
                   fiber: Optional[Fiber] = None, blowup: float = BLOWUP_BOUND) -> FlowResult:
    """Integrate an autonomous or time-dependent field from ``start``.

    ``steps`` defaults to ``default_steps()`` per unit time.
    """
    if steps is None:
        steps = max(1, int(math.ceil(abs(t1 - t0) * default_steps())))
    if isinstance(field, TimeDependentField):
        f = field.eval
    elif isinstance(field, VectorField):
        ev = field.eval
        f = lambda t, y: ev(y)  # noqa: E731
    else:
        f = field
    return solve(f, start, t0, t1, steps, fiber, blowup)


def flow_commutator(X: VectorField, Y: VectorField, at, t: float, s: float,
                    steps_per_unit: Optional[int] = None, fiber: Optional[Fiber] = None) -> np.ndarray:
    """``Fl^X_{-s} o Fl^Y_{-t} o Fl^X_s o Fl^Y_t`` applied to ``at`` (rightmost first)."""
    n = default_steps() if steps_per_unit is None else steps_per_unit
    p = np.asarray(at, dtype=float)
    for fld, tau in ((Y, t), (X, s), (Y, -t), (X, -s)):
        if tau == 0.0:
            continue
        steps = max(1, int(math.ceil(abs(tau) * n)))
        p = integrate_flow(fld, p, 0.0, tau, steps, fiber).point
    return p


# ---------------------------------------------------------------------------
# curves


class Curve:
    """Piecewise smooth curve on ``[0, 1]`` with an analytic derivative."""

    breakpoints: tuple = (0.0, 1.0)

    def eval(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, t: float, piece: Optional[int] = None) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, t):
        return self.eval(t)

    @property
    def dim(self) -> int:
        return int(np.asarray(self.eval(0.0)).size)

    def length(self, n: int = 256) -> float:
        ts = np.linspace(0.0, 1.0, n + 1)
        pts = np.array([self.eval(t) for t in ts])
        return float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))

    def reversed(self) -> "Curve":
        return ReversedCurve(self)


class Polyline(Curve):
    """Straight segments; segment ``i`` occupies ``[i/n, (i+1)/n]``."""

    def __init__(self, points):
        self.points = np.array(points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.n = len(self.points) - 1
        if self.n < 1:
            raise ValueError("a polyline needs at least two points")
        self.breakpoints = tuple(i / self.n for i in range(self.n + 1))

    def _locate(self, t):
        i = min(max(int(math.floor(t * self.n)), 0), self.n - 1)
        return i, t * self.n - i

    def eval(self, t):
        i, u = self._locate(t)
        return self.points[i] + u * (self.points[i + 1] - self.points[i])

    def derivative(self, t, piece=None):
        i = self._locate(t)[0] if piece is None else piece
        return self.n * (self.points[i + 1] - self.points[i])


def segment(a, b) -> Polyline:
    return Polyline([a, b])


class PolynomialCurve(Curve):
    """``c(t) = sum_j coeffs[j] t^j``; ``coeffs`` has shape ``(degree+1, m)``."""

    def __init__(self, coeffs):
        self.coeffs = np.array(coeffs, dtype=float)
        if self.coeffs.ndim == 1:
            self.coeffs = self.coeffs[:, None]

    def eval(self, t):
        powers = t ** np.arange(len(self.coeffs))
        return powers @ self.coeffs

    def derivative(self, t, piece=None):
        j = np.arange(1, len(self.coeffs))
        return (j * t ** (j - 1)) @ self.coeffs[1:]


class CircularArc(Curve):
    def __init__(self, center, radius, angle0, angle1):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.angle0 = float(angle0)
        self.angle1 = float(angle1)

    def eval(self, t):
        a = self.angle0 + t * (self.angle1 - self.angle0)
        return self.center + self.radius * np.array([math.cos(a), math.sin(a)])

    def derivative(self, t, piece=None):
        a = self.angle0 + t * (self.angle1 - self.angle0)
        w = self.angle1 - self.angle0
        return self.radius * w * np.array([-math.sin(a), math.cos(a)])


class RadialCurve(Curve):
    """``t -> center + t (x - center)``: the radial curve of an affine chart."""

    def __init__(self, center, x):
        self.center = np.asarray(center, dtype=float)
        self.x = np.asarray(x, dtype=float)

    def eval(self, t):
        return self.center + t * (self.x - self.center)

    def derivative(self, t, piece=None):
        return self.x - self.center


class ConstantCurve(Curve):
    def __init__(self, x):
        self.x = np.asarray(x, dtype=float)

    def eval(self, t):
        return self.x.copy()

    def derivative(self, t, piece=None):
        return np.zeros_like(self.x)


class ReversedCurve(Curve):
    def __init__(self, base: Curve):
        self.base = base
        self.breakpoints = tuple(sorted(1.0 - b for b in base.breakpoints))

    def eval(self, t):
        return self.base.eval(1.0 - t)

    def derivative(self, t, piece=None):
        if piece is not None:
            piece = len(self.breakpoints) - 2 - piece
        return -self.base.derivative(1.0 - t, piece)


class ReparametrizedCurve(Curve):
    """``c o phi`` for a monotone ``phi: [0,1] -> [0,1]`` with derivative ``dphi``."""

    def __init__(self, base: Curve, phi, dphi, breakpoints=None):
        self.base = base
        self.phi = phi
        self.dphi = dphi
        self.breakpoints = tuple(breakpoints) if breakpoints is not None else (0.0, 1.0)

    def eval(self, t):
        return self.base.eval(self.phi(t))

    def derivative(self, t, piece=None):
        return self.base.derivative(self.phi(t)) * self.dphi(t)


def _smoothstep(u):
    return u * u * u * (10 + u * (-15 + 6 * u))


def _dsmoothstep(u):
    return 30 * u * u * (1 - u) * (1 - u)


class Concatenation(Curve):
    """Curves joined end to end on ``[0, 1]``.

    Each piece is run through a smooth step that is flat at the junctions,
    so the concatenation is smooth even where the pieces meet at an angle.
    Breakpoints of the pieces are carried over to the joined parameter.
    """

    def __init__(self, curves: Sequence[Curve], smooth: bool = True):
        self.curves = list(curves)
        self.n = len(self.curves)
        self.smooth = smooth
        bps, pieces = [0.0], []
        for i, c in enumerate(self.curves):
            inner = list(c.breakpoints)
            for j in range(len(inner) - 1):
                u = _inverse_smoothstep(inner[j + 1]) if smooth else inner[j + 1]
                bps.append(1.0 if (i == self.n - 1 and j == len(inner) - 2) else (i + u) / self.n)
                pieces.append((i, j))
        self.breakpoints = tuple(bps)
        self._pieces = pieces

    def _locate(self, t):
        i = min(max(int(math.floor(t * self.n)), 0), self.n - 1)
        return i, t * self.n - i

    def eval(self, t):
        i, u = self._locate(t)
        tau = _smoothstep(u) if self.smooth else u
        return self.curves[i].eval(tau)

    def derivative(self, t, piece=None):
        j = None
        if piece is not None:
            i, j = self._pieces[piece]
            u = t * self.n - i
        else:
            i, u = self._locate(t)
        if self.smooth:
            return self.curves[i].derivative(_smoothstep(u), j) * _dsmoothstep(u) * self.n
        return self.curves[i].derivative(u, j) * self.n


def _inverse_smoothstep(b: float) -> float:
    if b <= 0.0 or b >= 1.0:
        return min(max(b, 0.0), 1.0)
    lo, hi = 0.0, 1.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _smoothstep(mid) < b:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def square_loop(corner, eps1: float, eps2: Optional[float] = None) -> Polyline:
    """Counterclockwise rectangle in the first two coordinates starting at ``corner``."""
    x = np.asarray(corner, dtype=float)
    e2 = eps1 if eps2 is None else eps2
    d1 = np.zeros_like(x)
    d2 = np.zeros_like(x)
    d1[0] = eps1
    d2[1] = e2
    return Polyline([x, x + d1, x + d1 + d2, x + d2, x])
