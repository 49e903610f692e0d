"""Bundle atlas and transition cocycle rebuilt from parallel transport.

Fiber coordinates over ``x`` are fixed by transporting from a base point
``x0`` to a chart center and then radially out to ``x``.  All group elements
here are left-acting fiber maps.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .connection import (Splitting, christoffel, holonomy_loop, projection_residual, transport_group,
                         transport_map)
from .errors import BasisProjectionError, ChartMismatch, CocycleViolation, DomainError
from .geometry import Concatenation, Curve, RadialCurve, default_steps
from .system import BaseAtlas, Chart, SystemSpec, build_associated_system

COCYCLE_TOL = 1e-6
PROJECTION_TOL = 1e-6
DEFAULT_OVERLAP_SAMPLES = 16


@dataclass
class RadialAtlas:
    charts: list  # Chart
    x0: np.ndarray
    paths: list  # Curve from x0 to each chart center

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        if len(self.paths) != len(self.charts):
            raise ValueError("one base path per chart required")
        for ch, p in zip(self.charts, self.paths):
            if np.max(np.abs(p.eval(0.0) - self.x0)) > 1e-12 or np.max(np.abs(p.eval(1.0) - ch.center)) > 1e-12:
                raise ValueError(f"path for chart {ch.name} must run from x0 to its center")

    @property
    def atlas(self) -> BaseAtlas:
        return BaseAtlas(len(self.x0), self.charts)

    def radial(self, alpha: int, x) -> Curve:
        """``t -> center + t (x - center)`` in the coordinates of chart ``alpha``."""
        ch: Chart = self.charts[alpha]
        if not ch.contains(x):
            raise ChartMismatch(f"{x} not in chart {ch.name}")
        return RadialCurve(ch.center, ch.local(x))


def radial_atlas_from_scenario(sc) -> RadialAtlas:
    if sc.radial is None:
        raise DomainError(f"scenario {sc.name} declares no radial atlas")
    return RadialAtlas(sc.radial.charts, sc.radial.x0, sc.radial.paths)


# ---------------------------------------------------------------------------
# atlas and cocycle


def reference_chart(sys: SystemSpec, x) -> int:
    """System chart whose fiber coordinates express ``E_x``."""
    return sys.base.chart_of(x)


def center_map(sp: Splitting, ratlas: RadialAtlas, alpha: int, steps: Optional[int] = None) -> np.ndarray:
    """Transport along the base path from ``x0`` to the center of chart ``alpha``."""
    sys = sp.sys
    mid = sys.base.chart_of(ratlas.charts[alpha].center)
    return transport_map(sp, ratlas.paths[alpha], 1.0, steps, reference_chart(sys, ratlas.x0), mid)


def build_bundle_atlas(sp: Splitting, ratlas: RadialAtlas, x, alpha: int, steps: Optional[int] = None,
                       end_chart: Optional[int] = None, to_center: Optional[np.ndarray] = None) -> np.ndarray:
    """Fiber map ``Pt(radial to x) Pt(x0 to center)`` from fiber coordinates at ``x0``.

    The result is expressed in system chart ``end_chart`` at ``x``
    (by default :func:`reference_chart`).
    """
    sys = sp.sys
    x = np.asarray(x, dtype=float)
    radial = ratlas.radial(alpha, x)
    mid = sys.base.chart_of(ratlas.charts[alpha].center)
    F1 = center_map(sp, ratlas, alpha, steps) if to_center is None else to_center
    end = reference_chart(sys, x) if end_chart is None else end_chart
    F2 = transport_map(sp, radial, 1.0, steps, mid, end)
    return F2 @ F1


@dataclass
class Cocycle:
    """Reconstructed transition functions ``psi[b, a](x) = A_b(x)^-1 A_a(x)``.

    Values are computed on demand and cached; ``samples`` holds the
    overlap grid used for verification.
    """

    sp: Splitting
    ratlas: RadialAtlas
    steps: int
    samples: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    def atlas_map(self, alpha: int, x) -> np.ndarray:
        key = (alpha, tuple(np.round(np.asarray(x, dtype=float), 14)))
        if key not in self._cache:
            self._cache[key] = build_bundle_atlas(self.sp, self.ratlas, x, alpha, self.steps,
                                                  to_center=self.center(alpha))
        return self._cache[key]

    def center(self, alpha: int) -> np.ndarray:
        key = ("center", alpha)
        if key not in self._cache:
            self._cache[key] = center_map(self.sp, self.ratlas, alpha, self.steps)
        return self._cache[key]

    def __call__(self, beta: int, alpha: int, x) -> np.ndarray:
        if beta == alpha:
            return np.eye(self.sp.sys.group.size)
        return np.linalg.solve(self.atlas_map(beta, x), self.atlas_map(alpha, x))

    def residuals(self) -> dict:
        """Worst identity, inverse and triple-product residuals over the sample grid."""
        n = self.sp.sys.group.size
        eye = np.eye(n)
        out = {"identity": 0.0, "inverse": 0.0, "triple": 0.0, "worst": None}
        worst = -1.0
        for key, pts in self.samples.items():
            for x in pts:
                if len(key) == 2:
                    b, a = key
                    r = float(np.max(np.abs(self(a, b, x) @ self(b, a, x) - eye)))
                    kind = "inverse"
                else:
                    a, b, c = key
                    r = float(np.max(np.abs(self(a, b, x) @ self(b, c, x) @ self(c, a, x) - eye)))
                    kind = "triple"
                out[kind] = max(out[kind], r)
                if r > worst:
                    worst = r
                    out["worst"] = {"charts": list(key), "x": np.asarray(x).tolist(), "residual": r}
        return out

    @property
    def max_residual(self) -> float:
        r = self.residuals()
        return max(r["identity"], r["inverse"], r["triple"])


def build_cocycle(sp: Splitting, ratlas: RadialAtlas, samples: int = DEFAULT_OVERLAP_SAMPLES, seed: int = 0,
                  steps: Optional[int] = None, tol: float = COCYCLE_TOL, points: Optional[dict] = None) -> Cocycle:
    """Sample the reconstructed cocycle on every pairwise and triple overlap and verify it."""
    if sp.sys.group is None:
        raise DomainError("cocycle reconstruction needs a matrix group")
    steps = default_steps() if steps is None else steps
    atlas = ratlas.atlas
    rng = np.random.default_rng(seed)
    k = len(ratlas.charts)
    if points is None:
        points = {}
        for b, a in itertools.permutations(range(k), 2):
            pts = atlas.sample_overlap((b, a), rng, samples)
            if len(pts):
                points[(b, a)] = pts
        for trip in itertools.combinations(range(k), 3):
            pts = atlas.sample_overlap(trip, rng, samples)
            if len(pts):
                points[trip] = pts
    coc = Cocycle(sp, ratlas, steps, dict(points))
    res = coc.residuals()
    if max(res["inverse"], res["triple"]) > tol:
        raise CocycleViolation(max(res["inverse"], res["triple"]), res["worst"])
    return coc


def loop_element(sp: Splitting, ratlas: RadialAtlas, beta: int, alpha: int, x,
                 steps: Optional[int] = None) -> np.ndarray:
    """Transport around ``x0 -> x_a -> x -> x_b -> x0`` as one loop.

    Equals ``psi[b, a](x)`` when the atlas is consistent.
    """
    x = np.asarray(x, dtype=float)
    ra = ratlas.radial(alpha, x)
    rb = ratlas.radial(beta, x)
    # both radial curves end at the same point of the base; use one global representative
    shift = ra.eval(1.0) - rb.eval(1.0)
    rb = RadialCurve(rb.center + shift, rb.x + shift)
    pb = _shifted(ratlas.paths[beta], shift)
    loop = Concatenation([ratlas.paths[alpha], ra, rb.reversed(), pb.reversed()])
    steps = default_steps() if steps is None else steps
    u0 = sp.sys.fiber.sample(np.random.default_rng(0), 1)[0]
    hol = holonomy_loop(sp, loop, u0, 4 * steps, reference_chart(sp.sys, ratlas.x0))
    return hol.fiber_map


class _Shifted(Curve):
    def __init__(self, base: Curve, shift):
        self.base = base
        self.shift = np.asarray(shift, dtype=float)
        self.breakpoints = base.breakpoints

    def eval(self, t):
        return self.base.eval(t) + self.shift

    def derivative(self, t, piece=None):
        return self.base.derivative(t, piece)


def _shifted(c: Curve, shift) -> Curve:
    return c if not np.any(shift) else _Shifted(c, shift)


def loop_holonomy_from_cocycle(coc: Cocycle, chain: Sequence[tuple[int, int, np.ndarray]]) -> np.ndarray:
    """Product of cocycle values along a chain of chart switches ``(to, from, x)``."""
    n = coc.sp.sys.group.size
    F = np.eye(n)
    for beta, alpha, x in chain:
        F = coc(beta, alpha, x) @ F
    return F


# ---------------------------------------------------------------------------
# principal reduction


def fundamental_field_projection(tau: Splitting, chart: int, x, xi, field: Optional[Callable] = None,
                                 samples: int = 12, seed: int = 0,
                                 tol: float = PROJECTION_TOL) -> tuple[np.ndarray, float]:
    """Fit the Christoffel field of ``tau`` at ``(x, xi)`` by fundamental fields.

    Returns the coefficient vector and the relative least-squares residual.
    ``field`` replaces the Christoffel field (used to probe fields outside
    the action algebra).
    """
    sys = tau.sys
    f = christoffel(tau, chart, x, xi) if field is None else field
    pts = sys.fiber.sample(np.random.default_rng(seed), samples)
    vals = [np.asarray(f(p), dtype=float) for p in pts]
    w, res = projection_residual(sys.rep(chart), pts, vals)
    if res > tol:
        raise BasisProjectionError(res, tol, f"Christoffel field at x={np.asarray(x).tolist()}")
    return w, res


# ---------------------------------------------------------------------------
# round trip


class GaugedMatrix:
    """Splitting matrix of ``sp`` in the reconstructed fiber coordinates of chart ``alpha``.

    ``M(s'(xi)) = A^-1 M(s(xi)) A + A^-1 (D A . xi)`` with
    ``A = build_bundle_atlas(..., alpha)`` differentiated numerically.
    Quacks like a polynomial for the transport routines.
    """

    def __init__(self, sp: Splitting, ratlas: RadialAtlas, alpha: int, steps: int, fd: float = 1e-4):
        self.sp, self.ratlas, self.alpha, self.steps, self.fd = sp, ratlas, alpha, steps, fd
        self.m = sp.sys.m
        self.shape = (sp.sys.d, sp.sys.m)
        self._cache = {}

    def _center(self) -> np.ndarray:
        if "center" not in self._cache:
            self._cache["center"] = center_map(self.sp, self.ratlas, self.alpha, self.steps)
        return self._cache["center"]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        key = tuple(np.round(x, 14))
        if key in self._cache:
            return self._cache[key]
        sys = self.sp.sys
        group = sys.group
        r = reference_chart(sys, x)
        F1 = self._center()
        A = build_bundle_atlas(self.sp, self.ratlas, x, self.alpha, self.steps, r, F1)
        Ainv = np.linalg.inv(A)
        S = self.sp.matrix(r, x)
        out = np.zeros(self.shape)
        for i in range(self.m):
            e = np.zeros(self.m)
            e[i] = self.fd
            Ap = build_bundle_atlas(self.sp, self.ratlas, x + e, self.alpha, self.steps, r, F1)
            Am = build_bundle_atlas(self.sp, self.ratlas, x - e, self.alpha, self.steps, r, F1)
            dpsi = -Ainv @ ((Ap - Am) / (2 * self.fd)) @ Ainv
            M = Ainv @ group.matrix(S[:, i]) @ A - dpsi @ A
            out[:, i], _ = group.coefficients(M)
        self._cache[key] = out
        return out

    def jacobian(self, x) -> np.ndarray:
        from .geometry import fd_jacobian

        return fd_jacobian(lambda y: self(y).ravel(), np.asarray(x, dtype=float), 1e-3).reshape(self.shape + (self.m,))


def reconstructed_system(sp: Splitting, coc: Cocycle, name: str = "reconstructed", tol: float = COCYCLE_TOL):
    """Associated system of the reconstructed cocycle, with the scenario's group action."""
    sys = sp.sys
    return build_associated_system(coc.ratlas.atlas, coc, sys.group, sys.fiber, name, tol=tol,
                                   samples=4)


def reconstructed_splitting(sp: Splitting, coc: Cocycle, assoc: SystemSpec, zero_tol: Optional[float] = None,
                            probe: int = 4, seed: int = 0) -> Splitting:
    """The splitting of ``sp`` written in the reconstructed charts.

    With ``zero_tol`` set, the gauged matrices are probed at a few points
    per chart and replaced by exact zeros when they vanish there (radial
    gauge on a one-dimensional base); otherwise numerical matrices are used.
    """
    from .poly import Polynomial

    gauged = [GaugedMatrix(sp, coc.ratlas, a, coc.steps) for a in range(len(coc.ratlas.charts))]
    if zero_tol is not None:
        rng = np.random.default_rng(seed)
        worst = 0.0
        for a, ch in enumerate(coc.ratlas.charts):
            lo = np.maximum(ch.lo, ch.center - 1.0)
            hi = np.minimum(ch.hi, ch.center + 1.0)
            for x in rng.uniform(lo, hi, size=(probe, len(lo))):
                worst = max(worst, float(np.max(np.abs(gauged[a](x)))))
        if worst <= zero_tol:
            return Splitting(assoc, [Polynomial.zero(assoc.m, (assoc.d, assoc.m)) for _ in gauged], "radial")
    sp2 = Splitting.__new__(Splitting)
    sp2.sys, sp2.polys, sp2.name = assoc, tuple(gauged), "radial"
    return sp2


@dataclass
class RoundTripResult:
    max_difference: float
    per_curve: list


def round_trip_check(sp: Splitting, coc: Cocycle, curves: Sequence[Curve], u0, steps: Optional[int] = None,
                     zero_tol: Optional[float] = 1e-8) -> RoundTripResult:
    """Transport in the reconstructed associated system against the original.

    A fiber point ``u`` in reconstructed chart ``a`` at ``x`` corresponds to
    ``A_a(x) u`` in the original coordinates.
    """
    steps = default_steps() if steps is None else steps
    assoc = reconstructed_system(sp, coc)
    sp2 = reconstructed_splitting(sp, coc, assoc, zero_tol)
    diffs = []
    group = sp.sys.group
    for c in curves:
        a0 = assoc.base.chart_of(c.eval(0.0))
        A0 = coc.atlas_map(a0, c.eval(0.0))
        u_orig = group.act_left(A0, u0)
        ref = transport_group(sp, c, 1.0, u_orig, steps, reference_chart(sp.sys, c.eval(0.0)))
        res2 = transport_group(sp2, c, 1.0, u0, steps, a0)
        x1 = c.eval(1.0)
        mapped = group.act_left(coc.atlas_map(res2.end_chart, x1), res2.end)
        target = ref.end
        if ref.end_chart != reference_chart(sp.sys, x1):
            target = sp.sys.change_chart(reference_chart(sp.sys, x1), ref.end_chart, x1, target)
        diffs.append(float(np.max(np.abs(mapped - target))))
    return RoundTripResult(max(diffs, default=0.0), diffs)


def loop_holonomy_check(sp: Splitting, coc: Cocycle, loop: Curve, steps: Optional[int] = None,
                        zero_tol: Optional[float] = 1e-8) -> float:
    """Holonomy of ``loop`` in the reconstructed system against the original one.

    The reconstructed value lives in the fiber coordinates of a chart at the
    start point and is compared after conjugating with that chart's atlas map.
    """
    steps = default_steps() if steps is None else steps
    assoc = reconstructed_system(sp, coc)
    sp2 = reconstructed_splitting(sp, coc, assoc, zero_tol)
    x0 = loop.eval(0.0)
    a0 = assoc.base.chart_of(x0)
    hol2 = transport_map(sp2, loop, 1.0, steps, a0, a0)
    r0 = reference_chart(sp.sys, x0)
    hol = transport_map(sp, loop, 1.0, steps, r0, r0)
    A = coc.atlas_map(a0, x0)
    return float(np.max(np.abs(A @ hol2 @ np.linalg.inv(A) - hol)))


# ---------------------------------------------------------------------------
# report


def reconstruction_report(sp: Splitting, coc: Cocycle, projection_points: int = 8, seed: int = 0) -> dict:
    """JSON-ready summary: cocycle residuals, sampled group elements, projection residuals."""
    res = coc.residuals()
    overlaps = []
    for key, pts in coc.samples.items():
        if len(key) != 2:
            continue
        b, a = key
        overlaps.append({
            "to": b, "from": a,
            "worst_inverse_residual": max(
                float(np.max(np.abs(coc(a, b, x) @ coc(b, a, x) - np.eye(len(coc(b, a, x)))))) for x in pts),
            "samples": [{"x": np.asarray(x).tolist(), "element": coc(b, a, x).tolist()} for x in pts],
        })
    rng = np.random.default_rng(seed)
    proj = []
    sys = sp.sys
    for alpha, ch in enumerate(sys.base.charts):
        for x in ch.sample(rng, projection_points):
            xi = rng.normal(size=sys.m)
            try:
                _, r = fundamental_field_projection(sp, alpha, x, xi, seed=seed)
            except BasisProjectionError as exc:
                r = exc.residual
            proj.append({"chart": alpha, "x": x.tolist(), "residual": r})
    return {
        "cocycle": {"inverse": res["inverse"], "triple": res["triple"], "worst": res["worst"]},
        "overlaps": overlaps,
        "projection": proj,
    }


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True)
