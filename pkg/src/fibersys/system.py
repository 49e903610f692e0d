"""Systems of vector fields in canonical form.

A system is presented chart-wise: over a chart ``U_a`` the bundle is
``U_a x S`` and an element ``(xi, v)`` of ``TU_a x V`` acts on the fiber
point ``s`` as ``(xi, eta_a(v)(s))``.  Base charts are open boxes in a
global coordinate space, optionally periodic (a circle is the real line
with period 2*pi).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (ChartMismatch, CocycleViolation, DimensionMismatch, EmptyFiber,
                     EscapeDetected, ValidationError)
from .geometry import Fiber, VectorField, lie_bracket, solve
from .lie import LieAlgebra, MatrixGroup, Representation
from .poly import Polynomial, bilinear

SAMPLE_BOX = 3.0


# ---------------------------------------------------------------------------
# base atlas


@dataclass(frozen=True)
class Chart:
    """Open box ``(lo, hi)`` in global base coordinates with a center point."""

    name: str
    lo: np.ndarray
    hi: np.ndarray
    center: np.ndarray
    period: Optional[np.ndarray] = None

    def local(self, x) -> np.ndarray:
        """Representative of ``x`` nearest the chart center (periodic coordinates)."""
        x = np.asarray(x, dtype=float)
        if self.period is None:
            return x
        out = x.copy()
        for i, P in enumerate(self.period):
            if np.isfinite(P) and P > 0:
                out[i] = x[i] - P * np.round((x[i] - self.center[i]) / P)
        return out

    def contains(self, x) -> bool:
        u = self.local(x)
        return bool(np.all(u > self.lo) and np.all(u < self.hi))

    def margin(self, x) -> float:
        u = self.local(x)
        return float(min(np.min(u - self.lo), np.min(self.hi - u)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        lo = np.maximum(self.lo, self.center - SAMPLE_BOX)
        hi = np.minimum(self.hi, self.center + SAMPLE_BOX)
        return rng.uniform(lo, hi, size=(n, len(lo)))


def make_chart(name, lo, hi, center=None, period=None) -> Chart:
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if center is None:
        center = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi), 0.0)
    per = None if period is None else np.asarray(period, dtype=float)
    return Chart(str(name), lo, hi, np.asarray(center, dtype=float), per)


class BaseAtlas:
    def __init__(self, dim: int, charts: Sequence[Chart]):
        self.dim = int(dim)
        self.charts = list(charts)
        if not self.charts:
            raise ValidationError("atlas", "at least one chart required")
        for c in self.charts:
            if c.lo.shape != (self.dim,):
                raise ValidationError("atlas", f"chart {c.name} has wrong dimension")
            if not c.contains(c.center):
                raise ValidationError("atlas", f"center of chart {c.name} outside the chart")

    def __len__(self):
        return len(self.charts)

    def charts_containing(self, x) -> list[int]:
        return [i for i, c in enumerate(self.charts) if c.contains(x)]

    def chart_of(self, x, prefer: Optional[int] = None) -> int:
        """Chart containing ``x`` with the largest margin (``prefer`` wins if it contains x)."""
        if prefer is not None and self.charts[prefer].contains(x):
            return prefer
        best, best_margin = None, -math.inf
        for i, c in enumerate(self.charts):
            if c.contains(x):
                m = c.margin(x)
                if m > best_margin:
                    best, best_margin = i, m
        if best is None:
            raise ChartMismatch(f"point {x} lies in no chart")
        return best

    def transition(self, beta: int, alpha: int, u) -> np.ndarray:
        """Chart coordinates change ``u_beta o u_alpha^{-1}``."""
        if not self.charts[alpha].contains(u) or not self.charts[beta].contains(u):
            raise ChartMismatch(f"{u} not in the overlap of charts {alpha},{beta}")
        return self.charts[beta].local(self.charts[alpha].local(u))

    def sample_overlap(self, idx: Sequence[int], rng: np.random.Generator, n: int, tries: int = 200) -> np.ndarray:
        out = []
        first = self.charts[idx[0]]
        for _ in range(tries):
            for x in first.sample(rng, 4 * n):
                if all(self.charts[i].contains(x) for i in idx):
                    out.append(x)
            if len(out) >= n:
                break
        return np.array(out[:n]).reshape(-1, self.dim)

    def base_cocycle_residual(self, rng: np.random.Generator, n: int = 8) -> float:
        worst = 0.0
        k = len(self.charts)
        for a, b, c in itertools.product(range(k), repeat=3):
            for x in self.sample_overlap((a, b, c), rng, n):
                u = self.transition(a, c, self.transition(c, b, self.transition(b, a, x)))
                worst = max(worst, float(np.max(np.abs(u - self.charts[a].local(x)))))
        return worst


# ---------------------------------------------------------------------------
# bundle transitions


class Transitions:
    """Fiber transition functions ``psi_ba(x)`` acting by ``s_b = psi_ba(x) . s_a``.

    Stored as piecewise-constant matrices: for each ordered pair a list of
    (box, matrix) pieces in global coordinates; the inverse pair is filled
    in automatically.  Pairs without pieces are the identity.
    """

    def __init__(self, size: int, pieces=None, period=None):
        self.size = size
        self.period = None if period is None else np.asarray(period, dtype=float)
        self.pieces: dict[tuple[int, int], list] = {}
        for (b, a), plist in (pieces or {}).items():
            for lo, hi, M in plist:
                self.add(b, a, lo, hi, M)

    def add(self, beta: int, alpha: int, lo, hi, matrix):
        M = np.asarray(matrix, dtype=float)
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        self.pieces.setdefault((beta, alpha), []).append((lo, hi, M))
        self.pieces.setdefault((alpha, beta), []).append((lo, hi, np.linalg.inv(M)))

    def _inside(self, x, lo, hi):
        x = np.asarray(x, dtype=float)
        if self.period is not None:
            mid = 0.5 * (lo + hi)
            per = np.where(np.isfinite(self.period), self.period, 0.0)
            shift = np.where(per > 0, per * np.round((x - mid) / np.where(per > 0, per, 1.0)), 0.0)
            x = x - shift
        return bool(np.all(x >= lo) and np.all(x <= hi))

    def __call__(self, beta: int, alpha: int, x) -> np.ndarray:
        if beta == alpha:
            return np.eye(self.size)
        for lo, hi, M in self.pieces.get((beta, alpha), []):
            if self._inside(x, lo, hi):
                return M
        return np.eye(self.size)


class FunctionTransitions:
    """Transitions given by a callable ``fn(beta, alpha, x) -> matrix``."""

    def __init__(self, size: int, fn: Callable):
        self.size = size
        self.fn = fn

    def __call__(self, beta, alpha, x):
        if beta == alpha:
            return np.eye(self.size)
        return np.asarray(self.fn(beta, alpha, x), dtype=float)


# ---------------------------------------------------------------------------
# system


@dataclass(frozen=True)
class SystemSpec:
    """Canonical presentation of a system ``(H, eta)`` on ``E -> M`` with fiber ``S``."""

    base: BaseAtlas
    fiber: Fiber
    algebra: LieAlgebra
    eta: tuple  # one Representation per chart
    group: Optional[MatrixGroup] = None
    transitions: Optional[Callable] = None
    name: str = "system"

    @property
    def m(self) -> int:
        return self.base.dim

    @property
    def k(self) -> int:
        return self.fiber.dim

    @property
    def d(self) -> int:
        return self.algebra.dim

    def rep(self, chart: int) -> Representation:
        if not 0 <= chart < len(self.eta):
            raise ChartMismatch(f"no chart {chart}")
        return self.eta[chart]

    def fiber_transition(self, beta: int, alpha: int, x) -> np.ndarray:
        size = self.group.size if self.group is not None else self.k
        if self.transitions is None or beta == alpha:
            return np.eye(size)
        return self.transitions(beta, alpha, x)

    def change_chart(self, beta: int, alpha: int, x, s) -> np.ndarray:
        """Fiber coordinates of the point ``s`` (chart alpha) in chart beta."""
        if beta == alpha:
            return np.asarray(s, dtype=float)
        psi = self.fiber_transition(beta, alpha, x)
        if self.group is not None:
            return self.fiber.project(self.group.act_left(psi, s))
        return self.fiber.project(np.asarray(s) @ psi.T)

    def check_chart(self, chart: int, x):
        if not 0 <= chart < len(self.base.charts):
            raise ChartMismatch(f"no chart {chart}")
        if not self.base.charts[chart].contains(x):
            raise ChartMismatch(f"base point {x} outside chart {self.base.charts[chart].name}")

    def validate(self, rng: Optional[np.random.Generator] = None, samples: int = 8):
        """Load-time invariants; raises ValidationError naming the first failure."""
        rng = np.random.default_rng(0) if rng is None else rng
        self.algebra.validate()
        if len(self.eta) != len(self.base.charts):
            raise ValidationError("eta", "one representation per chart required")
        pts = self.fiber.sample(rng, samples)
        for rep in self.eta:
            if rep.algebra.dim != self.d or rep.fiber_dim != self.k:
                raise ValidationError("eta", "representation dimensions disagree with the system")
            res = rep.homomorphism_residual(pts)
            if res > 1e-9:
                raise ValidationError("bracket-compatibility", f"residual {res:.3e}")
        if self.base.base_cocycle_residual(rng, 4) > 1e-10:
            raise ValidationError("base-cocycle", "base transitions violate the cocycle condition")
        res = transition_compatibility_residual(self, rng, samples)
        if res > 1e-7:
            raise ValidationError("transition-compatibility", f"residual {res:.3e}")
        return self


def transition_compatibility_residual(sys: SystemSpec, rng: np.random.Generator, samples: int = 8) -> float:
    """On overlaps, ``eta_b(Ad(psi) v)`` must equal the pushforward of ``eta_a(v)`` by ``psi``."""
    if sys.group is None or sys.transitions is None:
        return 0.0
    worst = 0.0
    k = len(sys.base.charts)
    for a, b in itertools.permutations(range(k), 2):
        xs = sys.base.sample_overlap((a, b), rng, samples)
        for x in xs:
            psi = sys.fiber_transition(b, a, x)
            lin = psi[: sys.k, : sys.k]
            for i in range(sys.d):
                v = np.eye(sys.d)[i]
                conj = psi @ sys.group.matrix(v) @ np.linalg.inv(psi)
                w, _ = sys.group.coefficients(conj)
                for q in sys.fiber.sample(rng, 3):
                    s = sys.group.act_left(np.linalg.inv(psi), q)
                    push = lin @ sys.rep(a).eval(v, s)
                    worst = max(worst, float(np.linalg.norm(push - sys.rep(b).eval(w, q))))
    return worst


def eval_eta(sys: SystemSpec, chart: int, x, xi, v, s) -> tuple[np.ndarray, np.ndarray]:
    """``(xi, eta_a(v)(s))``; the base part does not depend on ``s``."""
    x = np.asarray(x, dtype=float)
    sys.check_chart(chart, x)
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (sys.m,):
        raise DimensionMismatch("base tangent has the wrong dimension")
    return xi.copy(), sys.rep(chart).eval(v, s)


# ---------------------------------------------------------------------------
# sections of H


@dataclass(frozen=True)
class SectionH:
    """Section of ``H`` over one chart: base field ``X`` and V-valued ``v`` (polynomials)."""

    chart: int
    X: Polynomial
    v: Polynomial

    @property
    def is_vertical(self) -> bool:
        return self.X.is_zero()

    def __call__(self, x):
        return self.X(x), self.v(x)


def vertical_section(chart: int, v: Polynomial) -> SectionH:
    return SectionH(chart, Polynomial.zero(v.m, (v.m,)), v)


def bracket_H(sys: SystemSpec, h1: SectionH, h2: SectionH) -> SectionH:
    """Bracket of sections in canonical coordinates.

    ``([X1, X2], [v1, v2]^V + Dv2.X1 - Dv1.X2)`` with exact polynomial algebra.
    """
    if h1.chart != h2.chart:
        raise ChartMismatch("sections live on different charts")
    m = sys.m
    dot = lambda a, b: a * b  # noqa: E731  scalar times array

    X = Polynomial.zero(m, (m,))
    v = bilinear(h1.v, h2.v, lambda a, b: sys.algebra.bracket(a, b), (sys.d,))
    for i in range(m):
        X1i = h1.X.component(i)
        X2i = h2.X.component(i)
        X = X + bilinear(X1i, h2.X.partial(i), dot, (m,)) - bilinear(X2i, h1.X.partial(i), dot, (m,))
        v = v + bilinear(X1i, h2.v.partial(i), dot, (sys.d,)) - bilinear(X2i, h1.v.partial(i), dot, (sys.d,))
    if h1.is_vertical and h2.is_vertical:
        X = Polynomial.zero(m, (m,))
    return SectionH(h1.chart, X, v)


def section_field(sys: SystemSpec, h: SectionH) -> VectorField:
    """``eta-check(h)`` as a field on ``U x S`` in coordinates ``(x, s)``."""
    m = sys.m
    rep = sys.rep(h.chart)

    def f(p):
        p = np.asarray(p, dtype=float)
        x, s = p[:m], p[m:]
        return np.concatenate([h.X(x), rep.eval(h.v(x), s)])

    return VectorField(f, m + sys.k)


def pushforward_residual(sys: SystemSpec, h1: SectionH, h2: SectionH, points) -> float:
    """``|eta-check([h1,h2]^H) - [eta-check h1, eta-check h2]|`` over points ``(x, s)``."""
    hb = bracket_H(sys, h1, h2)
    F1, F2, Fb = (section_field(sys, h) for h in (h1, h2, hb))
    worst = 0.0
    for p in np.atleast_2d(points):
        worst = max(worst, float(np.linalg.norm(lie_bracket(F1, F2, p) - Fb(p))))
    return worst


# ---------------------------------------------------------------------------
# completeness


@dataclass(frozen=True)
class Complete:
    T: float

    def __bool__(self):
        return True


@dataclass(frozen=True)
class Escaped:
    t_esc: float
    s0: np.ndarray

    def __bool__(self):
        return False


def completeness_probe(sys: SystemSpec, chart: int, x, v, T: float, samples: int = 8,
                       steps_per_unit: int = 50, seed: int = 0, starts=None):
    """Integrate ``eta_a(v)`` for ``t`` in ``[-T, T]`` from sampled fiber points."""
    if T <= 0:
        raise ValueError("T must be positive")
    sys.check_chart(chart, x)
    field = sys.rep(chart).field(v)
    if starts is None:
        starts = sys.fiber.sample(np.random.default_rng(seed), samples)
    starts = np.atleast_2d(np.asarray(starts, dtype=float))
    steps = max(1, int(math.ceil(T * steps_per_unit)))
    f = lambda t, y: field.eval(y)  # noqa: E731
    first = None
    for s0 in starts:
        for sign in (1.0, -1.0):
            try:
                solve(f, s0, 0.0, sign * T, steps, sys.fiber, estimate=False)
            except EscapeDetected as exc:
                t_abs = abs(exc.t_esc)
                if first is None or t_abs < abs(first.t_esc):
                    first = Escaped(exc.t_esc, s0.copy())
    return first if first is not None else Complete(T)


def restrict_to_subbundle(sys: SystemSpec, predicate: Callable[[np.ndarray], bool],
                          label: str = "restricted", seed: int = 0) -> SystemSpec:
    """Same system data on the open fiber subset where ``predicate`` holds."""
    fiber = sys.fiber.restricted(predicate, label)
    if len(fiber.sample(np.random.default_rng(seed), 1)) == 0:
        raise EmptyFiber(f"predicate {label!r} excludes every sampled fiber point")
    return replace(sys, fiber=fiber, name=f"{sys.name}|{label}")


# ---------------------------------------------------------------------------
# associated systems


def cocycle_residual(transitions: Callable, base: BaseAtlas, rng: np.random.Generator,
                     samples: int = 8) -> tuple[float, object]:
    """Worst ``|psi_ab psi_bc psi_ca - I|`` over sampled triple overlaps."""
    worst, where = 0.0, None
    k = len(base.charts)
    for a, b, c in itertools.product(range(k), repeat=3):
        for x in base.sample_overlap((a, b, c), rng, samples):
            prod = transitions(a, b, x) @ transitions(b, c, x) @ transitions(c, a, x)
            r = float(np.max(np.abs(prod - np.eye(len(prod)))))
            if r > worst:
                worst, where = r, ((a, b, c), x.tolist())
    return worst, where


def build_associated_system(base: BaseAtlas, transitions: Callable, group: MatrixGroup, fiber: Fiber,
                            name: str = "associated", tol: float = 1e-8, seed: int = 0,
                            samples: int = 8) -> SystemSpec:
    """System induced on ``P[S]`` by a G-valued cocycle and a matrix-group action.

    ``V`` is the Lie algebra of the group and every ``eta_a`` is the
    fundamental field map of the action.
    """
    if group.fiber_dim != fiber.dim:
        raise DimensionMismatch("group action and fiber have different dimensions")
    res, where = cocycle_residual(transitions, base, np.random.default_rng(seed), samples)
    if res > tol:
        raise CocycleViolation(res, where)
    rep = group.representation()
    return SystemSpec(base, fiber, group.algebra, tuple(rep for _ in base.charts), group, transitions, name)


@dataclass(frozen=True)
class MonicVerdict:
    monic: bool
    ratios: tuple

    def __bool__(self):
        return self.monic


def check_monic(sys: SystemSpec, samples: int = 8, seed: int = 0, threshold: float = 1e-8) -> MonicVerdict:
    """Sampled-rank probe of injectivity of ``V -> fields on S`` in each chart."""
    if samples < 1:
        raise ValueError("samples must be positive")
    samples = max(samples, sys.d)
    rng = np.random.default_rng(seed)
    ratios = []
    for rep in sys.eta:
        pts = sys.fiber.sample(rng, samples)
        stacked = np.vstack([rep.basis_values(s) for s in pts])
        sv = np.linalg.svd(stacked, compute_uv=False)
        ratios.append(float(sv[-1] / sv[0]) if sv[0] > 0 else 0.0)
    return MonicVerdict(all(r > threshold for r in ratios), tuple(ratios))
