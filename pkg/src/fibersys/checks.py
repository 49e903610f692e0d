"""Invariant suites run against a scenario, collected into a report."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import connection as conn
from . import reconstruction as recon
from . import universal as univ
from .errors import ChartMismatch, CocycleViolation, EscapeDetected, FibersysError
from .scenarios import Scenario
from .system import Complete, completeness_probe, transition_compatibility_residual

SUITES = ("system", "transport", "curvature", "holonomy", "universal", "reconstruction")


@dataclass
class CheckResult:
    name: str
    status: str
    residual: Optional[float]
    tolerance: float
    runtime: Optional[float] = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass
class Report:
    scenario: str
    seed: int
    steps: int
    entries: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario, "seed": self.seed, "steps": self.steps, "passed": self.passed,
                "checks": [asdict(e) for e in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "status", "residual", "tolerance", "runtime", "detail"])
        for e in self.entries:
            w.writerow([e.name, e.status, "" if e.residual is None else repr(e.residual), repr(e.tolerance),
                        "" if e.runtime is None else f"{e.runtime:.6f}", e.detail])
        return buf.getvalue()


class _Ctx:
    def __init__(self, sc: Scenario, seed: int, steps: int, tol_scale: float, timing: bool):
        self.sc, self.seed, self.steps, self.tol_scale, self.timing = sc, seed, steps, tol_scale, timing
        self.entries: list[CheckResult] = []

    def rng(self, salt: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, salt])

    def tol(self, key: str, default: float) -> float:
        return self.sc.tol(key, default, self.tol_scale)

    def run(self, name: str, tol: float, fn: Callable[[], tuple]):
        """``fn`` returns ``(residual, ok)`` or ``(residual, ok, detail)``."""
        t0 = time.perf_counter()
        try:
            out = fn()
            residual, ok = out[0], out[1]
            detail = out[2] if len(out) > 2 else ""
            status = "pass" if ok else "fail"
        except FibersysError as exc:
            residual, status, detail = None, "fail", f"{type(exc).__name__}: {exc}"
        if residual is not None:
            residual = float(residual)
            if math.isnan(residual):
                status = "fail"
        rt = time.perf_counter() - t0 if self.timing else None
        self.entries.append(CheckResult(name, status, residual, tol, rt, detail))


def _fiber_points(ctx: _Ctx, n: int, salt: int) -> np.ndarray:
    return ctx.sc.system.fiber.sample(ctx.rng(salt), n)


def _closed(sc: Scenario):
    for name, c in sc.curves.items():
        x0, x1 = c.eval(0.0), c.eval(1.0)
        ch = sc.system.base.charts[sc.system.base.chart_of(x0)]
        if np.allclose(ch.local(x0), ch.local(x1), atol=1e-12, rtol=0):
            return name, c
    return None, None


# ---------------------------------------------------------------------------
# suites


def _system_suite(ctx: _Ctx):
    sc = ctx.sc
    sys = sc.system
    ctx.run("system.jacobi", ctx.tol("jacobi", 1e-12), lambda: (r := sys.algebra.jacobi_residual(),
                                                                 r <= ctx.tol("jacobi", 1e-12)))

    def bracket():
        pts = _fiber_points(ctx, 8, 1)
        r = max(sys.rep(a).homomorphism_residual(pts) for a in range(len(sys.base.charts)))
        return r, r <= ctx.tol("bracket", 1e-9)

    ctx.run("system.bracket-compatibility", ctx.tol("bracket", 1e-9), bracket)
    if sys.transitions is not None:
        tol = ctx.tol("transition", 1e-7)
        ctx.run("system.transition-compatibility", tol,
                lambda: (r := transition_compatibility_residual(sys, ctx.rng(2)), r <= tol))
    tol = ctx.tol("splitting", 1e-7)
    ctx.run("system.splitting-compatibility", tol,
            lambda: (r := sc.splitting.compatibility_residual(ctx.rng(3)), r <= tol))

    expect_complete = sc.expect.get("complete", True)

    def complete():
        chart = 0
        x = sys.base.charts[chart].center
        worst = None
        for i in range(sys.d):
            v = np.eye(sys.d)[i]
            res = completeness_probe(sys, chart, x, v, 10.0, samples=4, steps_per_unit=20, seed=ctx.seed)
            if not isinstance(res, Complete):
                worst = res
                break
        if expect_complete:
            return (0.0, True) if worst is None else (abs(worst.t_esc), False, f"escape at t={worst.t_esc:.6g}")
        return (0.0, False, "no escape found") if worst is None else (0.0, True, f"escape at t={worst.t_esc:.6g}")

    ctx.run("system.completeness", 0.0, complete)


def _transport_suite(ctx: _Ctx):
    sc = ctx.sc
    sys = sc.system
    sp = sc.splitting
    steps = ctx.steps
    if "escape_time" in sc.expect:
        tol = ctx.tol("escape_time", 1e-3)
        expected = float(sc.expect["escape_time"])
        u0 = np.asarray(sc.expect.get("escape_start"), dtype=float)
        name, c = next(iter(sc.curves.items()))

        def escape():
            try:
                conn.transport_direct(sp, c, 1.0, u0, steps)
            except EscapeDetected as exc:
                r = abs(exc.t_esc - expected)
                return r, r <= tol, f"curve {name}: escape at t={exc.t_esc:.9g}"
            return math.inf, False, f"curve {name}: no escape"

        ctx.run("transport.escape-time", tol, escape)
        return

    if sys.group is not None and sc.curves:
        tol = ctx.tol("dual_transport", 1e-7)

        def dual():
            u0 = _fiber_points(ctx, 1, 4)[0]
            worst = 0.0
            for c in sc.curves.values():
                a = conn.transport_direct(sp, c, 1.0, u0, steps)
                b = conn.transport_group(sp, c, 1.0, u0, steps)
                worst = max(worst, float(np.max(np.abs(sys.fiber.diff(a.end, b.end)))))
            return worst, worst <= tol

        ctx.run("transport.direct-vs-group", tol, dual)

    tol = ctx.tol("error_estimate", 1e-8)

    def estimate():
        u0 = _fiber_points(ctx, 1, 5)[0]
        worst = 0.0
        for c in sc.curves.values():
            worst = max(worst, conn.transport_direct(sp, c, 1.0, u0, steps).error_estimate)
        return worst, worst <= tol

    ctx.run("transport.error-estimate", tol, estimate)


def _curvature_suite(ctx: _Ctx):
    sc = ctx.sc
    sys = sc.system
    sp = sc.splitting
    if sys.m < 2:
        ctx.run("curvature.one-dimensional-base", 0.0, lambda: (0.0, True, "curvature vanishes identically"))
        return
    tol = ctx.tol("curvature", 1e-5)

    def bracket():
        rng = ctx.rng(6)
        ch = sys.base.charts[0]
        lo = np.maximum(ch.lo, ch.center - 1.0)
        hi = np.minimum(ch.hi, ch.center + 1.0)
        worst = 0.0
        for x, e in zip(rng.uniform(lo, hi, size=(10, sys.m)), _fiber_points(ctx, 10, 7)):
            X1, X2 = rng.normal(size=(2, sys.m))
            b = conn.curvature_bracket(sp, 0, x, X1, X2, e)
            f = conn.curvature_formula(sp, 0, x, X1, X2).as_field(e)
            worst = max(worst, float(np.max(np.abs(b - f))))
        return worst, worst <= tol

    ctx.run("curvature.bracket-vs-formula", tol, bracket)
    if sys.group is not None:
        tol2 = ctx.tol("small_loop", 1e-3)

        def small():
            x = sys.base.charts[0].center + 0.25
            e = np.eye(sys.m)
            res = conn.small_loop_limit(sp, x, e[0], e[1], steps=max(ctx.steps // 4, 50))
            ok = res.extrapolated_error <= tol2 and res.converges(1.0)
            return res.extrapolated_error, ok, f"orders {np.round(res.observed_orders, 3).tolist()}"

        ctx.run("curvature.small-loop-limit", tol2, small)


def _holonomy_suite(ctx: _Ctx):
    sc = ctx.sc
    sys = sc.system
    sp = sc.splitting
    if "holonomy_angle" in sc.expect:
        tol = ctx.tol("holonomy_angle", 1e-6)
        expected = float(sc.expect["holonomy_angle"])

        def angle():
            name, loop = _closed(sc)
            if loop is None:
                return math.inf, False, "no closed curve"
            u0 = _fiber_points(ctx, 1, 8)[0]
            hol = conn.holonomy_loop(sp, loop, u0, ctx.steps)
            a = conn.rotation_angle(hol.fiber_map)
            r = abs(math.remainder(a - expected, 2 * math.pi))
            return r, r <= tol, f"{name}: angle {a:.12g}"

        ctx.run("holonomy.loop-angle", tol, angle)
    if "holonomy_rank" in sc.expect and sys.group is not None:
        expected = int(sc.expect["holonomy_rank"])

        def rank():
            if sys.m < 2:
                return 0 - expected, expected == 0, "one-dimensional base"
            x0 = sys.base.charts[0].center
            ends = x0 + ctx.rng(9).uniform(-0.8, 0.8, size=(4, sys.m))
            est = conn.holonomy_algebra_sample(sp, conn.radial_paths(x0, ends), x0, steps=max(ctx.steps // 5, 50))
            return abs(est.rank - expected), est.rank == expected, f"rank {est.rank}"

        ctx.run("holonomy.algebra-rank", 0.0, rank)


def _universal_suite(ctx: _Ctx):
    sc = ctx.sc
    sys = sc.system
    sp = sc.splitting
    tol = ctx.tol("relatedness", 1e-10)
    ctx.run("universal.relatedness", tol, lambda: (r := univ.relatedness_check(sp, 100, ctx.seed), r <= tol))

    def kappa():
        rng = ctx.rng(10)
        x = sys.base.charts[0].center
        X = univ.TangentC(rng.normal(size=sys.m), rng.normal(size=(sys.d, sys.m)), univ.conn_point(sp, 0, x))
        a = rng.normal(size=sys.d)
        _, h = univ.kappa_inv(X, a)
        _, a2 = univ.kappa(X, h)
        r = float(np.max(np.abs(a2 - a)))
        return r, r <= 1e-14

    ctx.run("universal.kappa-roundtrip", 1e-14, kappa)
    single = {}
    for name, c in sc.curves.items():
        try:
            univ.require_in_chart(sys, c, 0)
            single[name] = c
        except ChartMismatch:
            pass
    if "escape_time" in sc.expect or not single:
        return
    tol2 = ctx.tol("universal_transport", 1e-7)

    def section():
        u0 = _fiber_points(ctx, 1, 11)[0]
        worst = 0.0
        for c in single.values():
            a = univ.universal_transport(sys, univ.section_curve(sp, c), 1.0, u0, ctx.steps).end
            b = conn.transport_direct(sp, c, 1.0, u0, ctx.steps, 0).end
            worst = max(worst, float(np.max(np.abs(sys.fiber.diff(a, b)))))
        return worst, worst <= tol2

    ctx.run("universal.section-transport", tol2, section)

    def vertical():
        rng = ctx.rng(12)
        x = sys.base.charts[0].center
        u0 = _fiber_points(ctx, 1, 13)[0]
        leg = univ.vertical_segment(x, rng.normal(size=(sys.d, sys.m)), rng.normal(size=(sys.d, sys.m)))
        res = univ.universal_transport(sys, leg, 1.0, u0, ctx.steps)
        r = float(np.max(np.abs(sys.fiber.diff(res.end, u0))))
        return r, r <= max(res.error_estimate, 1e-10)

    ctx.run("universal.vertical-transport", 1e-10, vertical)
    tol3 = ctx.tol("via_universal", 1e-6)

    def via():
        u0 = _fiber_points(ctx, 1, 14)[0]
        tau = sp.scaled(2.0)
        worst = 0.0
        for c in single.values():
            a = univ.transport_via_universal(tau, sp, c, 1.0, u0, ctx.steps, 0)
            b = conn.transport_direct(tau, c, 1.0, u0, ctx.steps, 0).end
            worst = max(worst, float(np.max(np.abs(sys.fiber.diff(a, b)))))
        return worst, worst <= tol3

    ctx.run("universal.transport-via-universal", tol3, via)


def _reconstruction_suite(ctx: _Ctx):
    sc = ctx.sc
    sys = sc.system
    sp = sc.splitting
    tol = ctx.tol("projection", 1e-6)

    def projection():
        rng = ctx.rng(15)
        worst = 0.0
        for a, ch in enumerate(sys.base.charts):
            for x in ch.sample(rng, 4):
                _, r = recon.fundamental_field_projection(sp, a, x, rng.normal(size=sys.m), seed=ctx.seed, tol=tol)
                worst = max(worst, r)
        return worst, worst <= tol

    ctx.run("reconstruction.fundamental-projection", tol, projection)
    if sc.radial is None or sys.group is None:
        return
    tol2 = ctx.tol("cocycle", 1e-6)
    ratlas = recon.radial_atlas_from_scenario(sc)
    steps = max(ctx.steps // 5, 100)
    holder = {}

    def cocycle():
        try:
            coc = recon.build_cocycle(sp, ratlas, samples=4, seed=ctx.seed, steps=steps, tol=tol2)
        except CocycleViolation as exc:
            return exc.residual, False, str(exc)
        holder["coc"] = coc
        return coc.max_residual, True

    ctx.run("reconstruction.cocycle", tol2, cocycle)
    coc = holder.get("coc")
    if coc is None:
        return

    def consistency():
        worst = 0.0
        for key, pts in coc.samples.items():
            if len(key) != 2:
                continue
            b, a = key
            x = pts[0]
            worst = max(worst, float(np.max(np.abs(recon.loop_element(sp, ratlas, b, a, x, steps) - coc(b, a, x)))))
        return worst, worst <= tol2

    ctx.run("reconstruction.atlas-consistency", tol2, consistency)
    if sys.m == 1:
        name, loop = _closed(sc)
        if loop is not None:
            ctx.run("reconstruction.loop-holonomy", tol2,
                    lambda: (r := recon.loop_holonomy_check(sp, coc, loop, steps), r <= tol2))
            u0 = _fiber_points(ctx, 1, 16)[0]
            ctx.run("reconstruction.round-trip", tol2,
                    lambda: (r := recon.round_trip_check(sp, coc, [loop], u0, steps).max_difference, r <= tol2))


_RUNNERS = {
    "system": _system_suite,
    "transport": _transport_suite,
    "curvature": _curvature_suite,
    "holonomy": _holonomy_suite,
    "universal": _universal_suite,
    "reconstruction": _reconstruction_suite,
}


def run_check_suite(sc: Scenario, suites: Optional[Sequence[str]] = None, seed: int = 0, steps: int = 1000,
                    tol_scale: float = 1.0, timing: bool = False) -> Report:
    """Run the selected suites (all by default) in a fixed order."""
    chosen = SUITES if not suites else tuple(s for s in SUITES if s in set(suites))
    unknown = set(suites or ()) - set(SUITES)
    if unknown:
        raise ValueError(f"unknown suites: {sorted(unknown)}")
    ctx = _Ctx(sc, seed, steps, tol_scale, timing)
    for s in chosen:
        _RUNNERS[s](ctx)
    return Report(sc.name, seed, steps, ctx.entries)
