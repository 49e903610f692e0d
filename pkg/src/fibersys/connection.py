"""Connections respecting a system: lifts, transports, curvature, holonomy.

A splitting is stored chart-wise as a polynomial ``x -> S_a(x)`` with values
in ``d x m`` matrices, so ``sigma_a(xi) = S_a(x) @ xi``.  The Christoffel
form of the induced connection is ``s -> eta_a(S_a(x) xi)(s)``.

Orientation convention: loops are counterclockwise in the ``(X1, X2)``
plane; with the right action ``r(s, g) = g^{-1} s`` the logarithm of the
holonomy group element of a small loop, divided by its area, tends to
``+curvature_formula``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import lie
from .errors import (BasisProjectionError, ChartMismatch, DimensionMismatch, DomainError,
                     LogBranchError)
from .geometry import (FD_STEP, Curve, Fiber, Polyline, VectorField, default_steps,
                       flow_commutator, lie_bracket, solve)
from .lie import GroupPath, integrate_left_invariant
from .poly import Polynomial
from .system import SystemSpec

HOLONOMY_TOL = 1e-6
RANK_THRESHOLD = 1e-8


class Splitting:
    """Right inverse of ``H -> TM`` given by per-chart polynomial matrices ``S_a(x)``."""

    def __init__(self, sys: SystemSpec, polys: Sequence[Polynomial], name: str = "sigma"):
        if len(polys) != len(sys.base.charts):
            raise DimensionMismatch("one polynomial per chart required")
        for p in polys:
            if p.shape != (sys.d, sys.m) or p.m != sys.m:
                raise DimensionMismatch(f"splitting polynomial must map R^{sys.m} to {sys.d}x{sys.m}")
        self.sys = sys
        self.polys = tuple(polys)
        self.name = name

    @classmethod
    def zero(cls, sys: SystemSpec) -> "Splitting":
        return cls(sys, [Polynomial.zero(sys.m, (sys.d, sys.m)) for _ in sys.base.charts], "zero")

    def matrix(self, chart: int, x) -> np.ndarray:
        return self.polys[chart](x)

    def __call__(self, chart: int, x, xi) -> np.ndarray:
        return self.matrix(chart, x) @ np.asarray(xi, dtype=float)

    def jacobian(self, chart: int, x) -> np.ndarray:
        """``J[a, j, i] = d S_a,j / d x_i``."""
        return self.polys[chart].jacobian(x)

    def scaled(self, a: float) -> "Splitting":
        return Splitting(self.sys, [p.scale(a) for p in self.polys], f"{a}*{self.name}")

    def __add__(self, other: "Splitting") -> "Splitting":
        return Splitting(self.sys, [p + q for p, q in zip(self.polys, other.polys)], f"{self.name}+{other.name}")

    def compatibility_residual(self, rng: np.random.Generator, samples: int = 8, fd: float = 1e-6) -> float:
        """On overlaps ``M(sigma_b xi) = psi M(sigma_a xi) psi^-1 - (D psi . xi) psi^-1``."""
        sys = self.sys
        if sys.group is None or len(sys.base.charts) < 2:
            return 0.0
        worst = 0.0
        import itertools

        for a, b in itertools.permutations(range(len(sys.base.charts)), 2):
            for x in sys.base.sample_overlap((a, b), rng, samples):
                psi = sys.fiber_transition(b, a, x)
                psi_inv = np.linalg.inv(psi)
                for i in range(sys.m):
                    xi = np.eye(sys.m)[i]
                    dpsi = (sys.fiber_transition(b, a, x + fd * xi) - sys.fiber_transition(b, a, x - fd * xi)) / (2 * fd)
                    lhs = sys.group.matrix(self(b, x, xi))
                    rhs = psi @ sys.group.matrix(self(a, x, xi)) @ psi_inv - dpsi @ psi_inv
                    worst = max(worst, float(np.max(np.abs(lhs - rhs))))
        return worst


# ---------------------------------------------------------------------------
# pointwise operations


def christoffel(sp: Splitting, chart: int, x, xi) -> VectorField:
    """The fiber field ``s -> eta_a(sigma_a(xi))(s)``."""
    sp.sys.check_chart(chart, x)
    return sp.sys.rep(chart).field(sp(chart, x, xi))


def horizontal_lift(sp: Splitting, chart: int, x, xi, e) -> tuple[np.ndarray, np.ndarray]:
    sp.sys.check_chart(chart, x)
    xi = np.asarray(xi, dtype=float)
    return xi.copy(), sp.sys.rep(chart).eval(sp(chart, x, xi), e)


def vertical_projection(sp: Splitting, chart: int, x, e, Y) -> np.ndarray:
    """``Y_vert - eta_a(sigma_a(Y_base))(e)``: projection onto VE along the horizontal space."""
    sp.sys.check_chart(chart, x)
    base, vert = Y
    return np.asarray(vert, dtype=float) - sp.sys.rep(chart).eval(sp(chart, x, base), e)


# ---------------------------------------------------------------------------
# transport


@dataclass
class TransportResult:
    times: np.ndarray
    base: np.ndarray
    fiber: np.ndarray
    charts: np.ndarray
    error_estimate: float
    fiber_maps: Optional[np.ndarray] = None

    @property
    def end(self) -> np.ndarray:
        return self.fiber[-1]

    @property
    def end_chart(self) -> int:
        return int(self.charts[-1])

    @property
    def group_path(self) -> Optional[GroupPath]:
        """Group elements ``g(t)`` with ``u(t) = r(u0, g(t)) = g(t)^{-1} u0``."""
        if self.fiber_maps is None:
            return None
        return GroupPath(self.times, np.linalg.inv(self.fiber_maps))

    @property
    def end_map(self) -> Optional[np.ndarray]:
        return None if self.fiber_maps is None else self.fiber_maps[-1]


@dataclass(frozen=True)
class _Segment:
    a: float
    b: float
    piece: int
    chart: int


def _exit_time(chart_obj, c: Curve, a: float, b: float, n: int) -> float:
    """Last parameter in ``[a, b]`` before ``c`` leaves ``chart_obj`` (``b`` if it stays)."""
    ts = np.linspace(a, b, n + 1)
    prev = a
    for t in ts[1:]:
        if not chart_obj.contains(c.eval(t)):
            lo, hi = prev, t
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if chart_obj.contains(c.eval(mid)):
                    lo = mid
                else:
                    hi = mid
            return lo
        prev = t
    return b


def plan_segments(sys: SystemSpec, c: Curve, t_end: float, steps: int, chart: Optional[int] = None) -> list[_Segment]:
    """Split ``[0, t_end]`` at curve breakpoints and chart exits."""
    base = sys.base
    alpha = base.chart_of(c.eval(0.0)) if chart is None else chart
    sys.check_chart(alpha, c.eval(0.0))
    bps = list(c.breakpoints)
    out = []
    for j in range(len(bps) - 1):
        a, b = bps[j], min(bps[j + 1], t_end)
        if a >= t_end:
            break
        t = a
        while t < b:
            n = max(16, int(math.ceil(steps * (b - t))))
            tx = _exit_time(base.charts[alpha], c, t, b, n)
            if tx > t:
                out.append(_Segment(t, tx, j, alpha))
            if tx >= b:
                break
            x = c.eval(tx)
            others = [i for i in base.charts_containing(x) if i != alpha]
            if not others:
                raise ChartMismatch(f"curve leaves the atlas near t={tx:.6g}")
            alpha = max(others, key=lambda i: base.charts[i].margin(x))
            t = tx
    return out


def _nsteps(steps: int, length: float) -> int:
    return max(1, int(math.ceil(steps * length - 1e-9)))


def _direct_run(sp: Splitting, c: Curve, segs, u0, steps: int, record: bool = True):
    sys = sp.sys
    u = np.asarray(u0, dtype=float)
    times, states, charts = [segs[0].a], [u], [segs[0].chart]
    err = 0.0
    prev = segs[0].chart
    for seg in segs:
        if seg.chart != prev:
            u = sys.change_chart(seg.chart, prev, c.eval(seg.a), u)
            prev = seg.chart
        poly = sp.polys[seg.chart]
        rep = sys.rep(seg.chart)
        j = seg.piece

        def f(t, s, poly=poly, rep=rep, j=j):
            return rep.eval(poly(c.eval(t)) @ c.derivative(t, j), s)

        res = solve(f, u, seg.a, seg.b, _nsteps(steps, seg.b - seg.a), sys.fiber, estimate=record)
        err += res.error_estimate
        u = res.point
        if record:
            times.extend(res.times[1:])
            states.extend(res.path[1:])
            charts.extend([seg.chart] * (len(res.times) - 1))
    return u, np.array(times), np.array(states), np.array(charts), err


def transport_direct(sp: Splitting, c: Curve, t: float = 1.0, u0=None, steps: Optional[int] = None,
                     chart: Optional[int] = None) -> TransportResult:
    """Parallel transport by integrating the Christoffel field on the fiber.

    Pieces the curve across charts, changing fiber coordinates with the
    bundle transition functions.  ``u0`` may be a batch ``(N, k)``.
    """
    steps = default_steps() if steps is None else steps
    segs = plan_segments(sp.sys, c, t, steps, chart)
    if not segs:
        u = np.asarray(u0, dtype=float)
        return TransportResult(np.array([0.0]), np.array([c.eval(0.0)]), np.array([u]),
                               np.array([sp.sys.base.chart_of(c.eval(0.0), chart)]), 0.0)
    _, times, states, charts, err = _direct_run(sp, c, segs, u0, steps)
    base = np.array([c.eval(s) for s in times])
    return TransportResult(times, base, states, charts, err)


def _group_run(sp: Splitting, c: Curve, segs, steps: int, record: bool = True):
    sys = sp.sys
    group = sys.group
    F = group.identity()
    maps, times, charts = [F], [segs[0].a], [segs[0].chart]
    prev = segs[0].chart
    for seg in segs:
        if seg.chart != prev:
            F = sys.fiber_transition(seg.chart, prev, c.eval(seg.a)) @ F
            prev = seg.chart
        poly = sp.polys[seg.chart]
        j = seg.piece

        def xi(t, poly=poly, j=j):
            return poly(c.eval(t)) @ c.derivative(t, j)

        gp = integrate_left_invariant(group, xi, seg.b, _nsteps(steps, seg.b - seg.a), t0=seg.a)
        F_seg = np.linalg.inv(gp.elements)
        path = F_seg @ F
        F = path[-1]
        if record:
            maps.extend(path[1:])
            times.extend(gp.times[1:])
            charts.extend([seg.chart] * (len(gp.times) - 1))
    return F, np.array(times), np.array(maps), np.array(charts)


def transport_group(sp: Splitting, c: Curve, t: float = 1.0, u0=None, steps: Optional[int] = None,
                    chart: Optional[int] = None, estimate: bool = True) -> TransportResult:
    """Transport through the group: solve ``g' = g M(sigma(c'))``, then act on ``u0``."""
    sys = sp.sys
    if sys.group is None:
        raise DomainError("scenario declares no matrix group")
    steps = default_steps() if steps is None else steps
    segs = plan_segments(sys, c, t, steps, chart)
    if not segs:
        segs = [_Segment(0.0, 0.0, 0, sys.base.chart_of(c.eval(0.0), chart))]
        F = sys.group.identity()
        times, maps, charts = np.array([0.0]), F[None], np.array([segs[0].chart])
        err = 0.0
    else:
        F, times, maps, charts = _group_run(sp, c, segs, steps)
        err = 0.0
        if estimate:
            Fc, *_ = _group_run(sp, c, segs, max(1, steps // 2), record=False)
            err = float(np.max(np.abs(F - Fc))) / 15.0
    if u0 is None:
        u0 = np.zeros(sys.k)
    u0 = np.asarray(u0, dtype=float)
    fib = np.array([sys.group.act_left(M, u0) for M in maps])
    base = np.array([c.eval(s) for s in times])
    return TransportResult(times, base, fib, charts, err, maps)


def transport_map(sp: Splitting, c: Curve, t: float = 1.0, steps: Optional[int] = None,
                  chart: Optional[int] = None, end_chart: Optional[int] = None) -> np.ndarray:
    """Fiber map of the transport as a left-acting group matrix, optionally re-expressed in ``end_chart``."""
    res = transport_group(sp, c, t, None, steps, chart, estimate=False)
    F = res.end_map
    if end_chart is not None and end_chart != res.end_chart:
        F = sp.sys.fiber_transition(end_chart, res.end_chart, c.eval(t)) @ F
    return F


def write_trace(result: TransportResult, path) -> None:
    """CSV trace: ``t``, base coordinates, fiber coordinates, group-element entries."""
    fib = result.fiber
    if fib.ndim == 3:
        fib = fib[:, 0, :]
    m = result.base.shape[1]
    k = fib.shape[1]
    header = ["t"] + [f"x{i}" for i in range(m)] + [f"s{i}" for i in range(k)] + ["chart"]
    g = result.group_path
    if g is not None:
        n = g.elements.shape[1]
        header += [f"g{i}{j}" for i in range(n) for j in range(n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, t in enumerate(result.times):
            row = [repr(float(t))] + [repr(float(v)) for v in result.base[i]] + [repr(float(v)) for v in fib[i]]
            row.append(int(result.charts[i]))
            if g is not None:
                row += [repr(float(v)) for v in g.elements[i].ravel()]
            w.writerow(row)


# ---------------------------------------------------------------------------
# curvature


@dataclass(frozen=True)
class CurvatureValue:
    v: np.ndarray
    as_field: VectorField


def curvature_formula(sp: Splitting, chart: int, x, X1, X2) -> CurvatureValue:
    """``d sigma(X1, X2) + [sigma X1, sigma X2]^V`` for constant coordinate fields."""
    sys = sp.sys
    sys.check_chart(chart, x)
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    J = sp.jacobian(chart, x)
    dsig = np.einsum("aji,i,j->a", J, X1, X2) - np.einsum("aij,i,j->a", J, X1, X2)
    v = dsig + sys.algebra.bracket(sp(chart, x, X1), sp(chart, x, X2))
    return CurvatureValue(v, sys.rep(chart).field(v))


def lifted_field(sp: Splitting, chart: int, X) -> VectorField:
    """Horizontal lift of the constant base field ``X`` as a field on ``U x S``."""
    sys = sp.sys
    m = sys.m
    X = np.asarray(X, dtype=float)
    poly = sp.polys[chart]
    rep = sys.rep(chart)

    def f(p):
        p = np.asarray(p, dtype=float)
        x, s = p[..., :m], p[..., m:]
        v = poly(x) @ X
        if p.ndim == 1:
            vert = rep.eval(v, s)
        else:
            vert = np.einsum("...ij,...j->...i", np.tensordot(v, rep.A, axes=(-1, 0)), s) + v @ rep.b
        return np.concatenate([np.broadcast_to(X, x.shape), vert], axis=-1)

    return VectorField(f, m + sys.k)


def curvature_bracket(sp: Splitting, chart: int, x, X1, X2, e, fd_scale: float = FD_STEP) -> np.ndarray:
    """Vertical projection of ``[C X1, C X2]`` computed by finite differences on ``U x S``."""
    sys = sp.sys
    sys.check_chart(chart, x)
    p = np.concatenate([np.asarray(x, dtype=float), np.asarray(e, dtype=float)])
    br = lie_bracket(lifted_field(sp, chart, X1), lifted_field(sp, chart, X2), p, fd_scale)
    return vertical_projection(sp, chart, x, e, (br[: sys.m], br[sys.m:]))


# ---------------------------------------------------------------------------
# holonomy


@dataclass
class HolonomyResult:
    transport: TransportResult
    end: np.ndarray
    fiber_map: Optional[np.ndarray]

    @property
    def group_element(self) -> Optional[np.ndarray]:
        return None if self.fiber_map is None else np.linalg.inv(self.fiber_map)


def holonomy_loop(sp: Splitting, c: Curve, u0, steps: Optional[int] = None, chart: Optional[int] = None,
                  use_group: bool = True) -> HolonomyResult:
    """Transport around a closed curve, re-expressed in the starting chart."""
    sys = sp.sys
    x0, x1 = c.eval(0.0), c.eval(1.0)
    start_chart = sys.base.chart_of(x0, chart)
    if not np.allclose(sys.base.charts[start_chart].local(x0), sys.base.charts[start_chart].local(x1), atol=1e-12, rtol=0):
        raise DomainError("holonomy_loop needs a closed curve")
    res = transport_direct(sp, c, 1.0, u0, steps, start_chart)
    end = sys.change_chart(start_chart, res.end_chart, x1, res.end)
    F = None
    if use_group and sys.group is not None:
        F = transport_map(sp, c, 1.0, steps, start_chart, start_chart)
    return HolonomyResult(res, end, F)


def rotation_angle(F) -> float:
    """Angle of a planar rotation block."""
    return math.atan2(F[1, 0], F[0, 0])


@dataclass
class HolonomyAlgebraEstimate:
    samples: np.ndarray
    rank: int
    basis: np.ndarray
    singular_values: np.ndarray
    max_residual: float


def holonomy_algebra_sample(sp: Splitting, paths: Sequence[Curve], x0=None, pairs=None,
                            steps: Optional[int] = None, tol: float = HOLONOMY_TOL) -> HolonomyAlgebraEstimate:
    """Curvature at path endpoints pulled back to ``x0`` through transport.

    The pullback of ``eta(v)`` by the transport map ``F`` is ``eta(Ad(F^-1) v)``;
    every sample passes the Ad basis-membership gate at ``tol``.
    """
    sys = sp.sys
    if sys.group is None:
        raise DomainError("holonomy algebra sampling needs group data")
    m = sys.m
    if pairs is None:
        pairs = [(np.eye(m)[i], np.eye(m)[j]) for i in range(m) for j in range(i + 1, m)]
    out = []
    worst = 0.0
    for c in paths:
        if x0 is not None and not np.allclose(c.eval(0.0), x0, atol=1e-12):
            raise DomainError("paths must start at x0")
        res = transport_group(sp, c, 1.0, None, steps)
        F = res.end_map
        x = c.eval(1.0)
        beta = res.end_chart
        for X1, X2 in pairs:
            Om = curvature_formula(sp, beta, x, X1, X2).v
            v0, r = lie.Ad_with_residual(sys.group, np.linalg.inv(F), Om, tol)
            worst = max(worst, r)
            out.append(v0)
    samples = np.array(out).reshape(-1, sys.d)
    if len(samples) == 0:
        return HolonomyAlgebraEstimate(samples, 0, np.zeros((0, sys.d)), np.zeros(0), 0.0)
    _, sv, Vt = np.linalg.svd(samples, full_matrices=False)
    rank = int(np.sum(sv > RANK_THRESHOLD * sv[0])) if sv[0] > 0 else 0
    return HolonomyAlgebraEstimate(samples, rank, Vt[:rank], sv, worst)


def radial_paths(x0, endpoints) -> list[Curve]:
    return [Polyline([x0, x]) for x in endpoints]


def ad_pullback_check(sp: Splitting, c: Curve, v, sample_points, t: float = 1.0,
                      steps: Optional[int] = None, fd: float = 1e-4) -> float:
    """Max residual between the transport pullback of ``eta(v)`` and ``eta(Ad(g(t)) v)``.

    The pullback is computed from the transport itself: its differential by
    central differences through transported nearby fiber points.
    """
    sys = sp.sys
    if t == 0.0:
        return 0.0
    fib = sys.fiber
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    batch = []
    for s in pts:
        T = fib.tangent_basis(s)
        batch.append(s)
        for i in range(T.shape[1]):
            batch.append(fib.perturb(s, T[:, i], fd))
            batch.append(fib.perturb(s, T[:, i], -fd))
    res = transport_direct(sp, c, t, np.array(batch), steps)
    moved = res.end
    F = transport_map(sp, c, t, steps)
    g = np.linalg.inv(F)
    start_chart = int(res.charts[0])
    w = lie.Ad(sys.group, g, v)
    worst = 0.0
    idx = 0
    for s in pts:
        T = fib.tangent_basis(s)
        r = T.shape[1]
        ps = moved[idx]
        cols = [fib.diff(moved[idx + 1 + 2 * i], moved[idx + 2 + 2 * i]) / (2 * fd) for i in range(r)]
        idx += 1 + 2 * r
        D = np.column_stack(cols)
        target = sys.rep(res.end_chart).eval(v, ps)
        y, *_ = np.linalg.lstsq(D, target, rcond=None)
        pulled = T @ y
        expect = sys.rep(start_chart).eval(w, s)
        worst = max(worst, float(np.linalg.norm(pulled - expect)))
    return worst


# ---------------------------------------------------------------------------
# flow commutators and small loops


class TotalSpace(Fiber):
    """``U x S`` as a state space: base coordinates free, fiber part projected."""

    def __init__(self, m: int, fiber: Fiber):
        self.m = m
        self.fiber = fiber
        self.dim = m + fiber.dim

    def contains(self, p):
        p = np.asarray(p)
        return bool(np.all(np.isfinite(p))) and self.fiber.contains(p[..., self.m:])

    def project(self, p):
        p = np.array(p, dtype=float)
        p[..., self.m:] = self.fiber.project(p[..., self.m:])
        return p

    def diff(self, a, b):
        d = np.asarray(a) - np.asarray(b)
        d[..., self.m:] = self.fiber.diff(np.asarray(a)[..., self.m:], np.asarray(b)[..., self.m:])
        return d


def projection_residual(rep, points, values) -> tuple[np.ndarray, float]:
    """Least-squares fit of fiber-field samples by ``eta(w)``; returns ``(w, relative residual)``."""
    A = np.vstack([rep.basis_values(s) for s in points])
    b = np.concatenate(list(values))
    w, *_ = np.linalg.lstsq(A, b, rcond=None)
    res = float(np.linalg.norm(A @ w - b))
    nb = float(np.linalg.norm(b))
    return w, (res / nb if nb > 1e-12 else res)


@dataclass
class Claim2Result:
    max_residual: float
    residuals: np.ndarray
    coefficients: np.ndarray


def claim2_check(sp: Splitting, x, X, Y, t_grid, s_grid, chart: Optional[int] = None, samples: int = 6,
                 fd_t: float = 1e-3, steps_per_unit: Optional[int] = None, seed: int = 0) -> Claim2Result:
    """``Z = (d/dt f_{t,s}) o f_{t,s}^{-1}`` projected onto the fundamental fields.

    ``f_{t,s} = Fl^{CX}_{-s} Fl^{CY}_{-t} Fl^{CX}_s Fl^{CY}_t`` restricted to the fiber over ``x``.
    """
    sys = sp.sys
    x = np.asarray(x, dtype=float)
    chart = sys.base.chart_of(x, chart)
    m = sys.m
    CX = lifted_field(sp, chart, X)
    CY = lifted_field(sp, chart, Y)
    space = TotalSpace(m, sys.fiber)
    rep = sys.rep(chart)
    q = sys.fiber.sample(np.random.default_rng(seed), samples)
    P = np.hstack([np.broadcast_to(x, (len(q), m)), q])
    t_grid = list(t_grid)
    s_grid = list(s_grid)
    res = np.zeros((len(t_grid), len(s_grid)))
    coefs = np.zeros((len(t_grid), len(s_grid), sys.d))
    for i, t in enumerate(t_grid):
        for j, s in enumerate(s_grid):
            # f^{-1}: apply Fl^{CX}_s, Fl^{CY}_t, Fl^{CX}_{-s}, Fl^{CY}_{-t}
            E = flow_commutator(CY, CX, P, s, t, steps_per_unit, space)
            fp = flow_commutator(CX, CY, E, t + fd_t, s, steps_per_unit, space)
            fm = flow_commutator(CX, CY, E, t - fd_t, s, steps_per_unit, space)
            Z = sys.fiber.diff(fp[:, m:], fm[:, m:]) / (2 * fd_t)
            w, r = projection_residual(rep, q, Z)
            res[i, j] = r
            coefs[i, j] = w
    return Claim2Result(float(res.max()), res, coefs)


@dataclass
class SmallLoopResult:
    extrapolated: np.ndarray
    estimates: np.ndarray
    epsilons: np.ndarray
    reference: np.ndarray
    errors: np.ndarray
    observed_orders: np.ndarray
    extrapolated_error: float

    def converges(self, min_order: float = 1.0, floor: float = 1e-10) -> bool:
        """Every observed order is at least ``min_order``.

        Consecutive errors already below ``floor`` are rounding noise and count as converged.
        """
        for k, p in enumerate(self.observed_orders):
            if self.errors[k + 1] <= floor:
                continue
            if not (np.isfinite(p) and p >= min_order):
                return False
        return True


def _neville_at_zero(eps, vals):
    """Polynomial extrapolation of ``vals(eps)`` to ``eps = 0`` (Richardson tableau)."""
    eps = list(eps)
    P = [np.array(v, dtype=float) for v in vals]
    n = len(P)
    for k in range(1, n):
        for i in range(n - k):
            P[i] = (eps[i + k] * P[i] - eps[i] * P[i + 1]) / (eps[i + k] - eps[i])
    return P[0]


def small_loop_limit(sp: Splitting, x, X1, X2, epsilons=(0.2, 0.1, 0.05), steps: Optional[int] = None,
                     chart: Optional[int] = None) -> SmallLoopResult:
    """Log of the holonomy around ``eps``-parallelograms, divided by area, extrapolated to 0.

    Each parallelogram is centered on ``x`` and reached by a straight tail
    from ``x``, so the holonomy is based at ``x`` and the error is even in ``eps``.
    """
    sys = sp.sys
    eps = np.asarray(epsilons, dtype=float)
    if len(eps) < 3 or np.any(np.diff(eps) >= 0):
        raise ValueError("need at least three decreasing epsilons")
    x = np.asarray(x, dtype=float)
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    chart = sys.base.chart_of(x, chart)
    ests = []
    for e in eps:
        corner = x - 0.5 * e * (X1 + X2)
        loop = Polyline([x, corner, corner + e * X1, corner + e * (X1 + X2), corner + e * X2, corner, x])
        u0 = sys.fiber.sample(np.random.default_rng(0), 1)[0]
        F = holonomy_loop(sp, loop, u0, steps, chart).fiber_map
        g = np.linalg.inv(F)
        L = lie.log(g)
        w, _ = sys.group.coefficients(L)
        ests.append(w / (e * e))
    ests = np.array(ests)
    ref = curvature_formula(sp, chart, x, X1, X2).v
    extrap = _neville_at_zero(eps, ests)
    errors = np.linalg.norm(ests - ref, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log(errors[:-1] / errors[1:]) / np.log(eps[:-1] / eps[1:])
    return SmallLoopResult(extrap, ests, eps, ref, errors, orders, float(np.linalg.norm(extrap - ref)))
