"""The bundle of splittings, its extended system and the universal connection.

A point of the connection bundle over ``x`` is a splitting value, stored as
the ``d x m`` matrix ``S`` with ``xi -> (xi, S xi)``.  Each chart trivializes
the bundle affinely with the zero splitting as origin.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .connection import Splitting, TransportResult, horizontal_lift, vertical_projection
from .errors import ChartMismatch, DimensionMismatch, FiberedProductViolation
from .geometry import ConstantCurve, Curve, default_steps, solve
from .system import SystemSpec

FIBERED_TOL = 1e-12


@dataclass(frozen=True)
class ConnPoint:
    x: np.ndarray
    S: np.ndarray
    chart: int = 0


@dataclass(frozen=True)
class TangentC:
    xi: np.ndarray
    Sdot: np.ndarray
    foot: ConnPoint

    def __post_init__(self):
        d, m = np.shape(self.foot.S)
        if np.shape(self.xi) != (m,) or np.shape(self.Sdot) != (d, m):
            raise DimensionMismatch("tangent vector does not match its foot point")


@dataclass(frozen=True)
class ExtendedPoint:
    c: ConnPoint
    e: np.ndarray


def conn_point(sp: Splitting, chart: int, x) -> ConnPoint:
    """Value of the splitting ``sp`` at ``x`` as a point of the connection bundle."""
    x = np.asarray(x, dtype=float)
    return ConnPoint(x, sp.matrix(chart, x), chart)


def tangent_of_section(sp: Splitting, chart: int, x, xi) -> TangentC:
    """``T sigma . xi`` using the exact polynomial derivative of the splitting."""
    xi = np.asarray(xi, dtype=float)
    return TangentC(xi, sp.jacobian(chart, x) @ xi, conn_point(sp, chart, x))


def _check(sys: SystemSpec, X: TangentC):
    if not sys.base.charts[X.foot.chart].contains(X.foot.x):
        raise ChartMismatch(f"foot point outside chart {X.foot.chart}")
    if np.shape(X.foot.S) != (sys.d, sys.m):
        raise DimensionMismatch("splitting value has the wrong shape")


def kappa(X: TangentC, h) -> tuple[TangentC, np.ndarray]:
    """Split ``(X, h)`` with ``h = (xi', v)`` into ``X`` and the vertical part ``v - S xi'``."""
    xi_h, v = (np.asarray(a, dtype=float) for a in h)
    if xi_h.shape != X.xi.shape or np.max(np.abs(xi_h - X.xi), initial=0.0) > FIBERED_TOL:
        raise FiberedProductViolation("H-value does not lie over the base velocity of X")
    return X, v - X.foot.S @ xi_h


def kappa_inv(X: TangentC, a) -> tuple[TangentC, tuple[np.ndarray, np.ndarray]]:
    return X, (X.xi.copy(), np.asarray(a, dtype=float) + X.foot.S @ X.xi)


def universal_lift(sys: SystemSpec, X: TangentC, e) -> tuple[TangentC, np.ndarray]:
    """Horizontal lift to the extended bundle; the fiber part only sees ``S xi``."""
    _check(sys, X)
    return X, sys.rep(X.foot.chart).eval(X.foot.S @ X.xi, np.asarray(e, dtype=float))


def universal_projection(sys: SystemSpec, X: TangentC, Y, e) -> np.ndarray:
    _check(sys, X)
    return np.asarray(Y, dtype=float) - sys.rep(X.foot.chart).eval(X.foot.S @ X.xi, np.asarray(e, dtype=float))


def relatedness_check(sp: Splitting, samples: int = 100, seed: int = 0, chart: int = 0) -> float:
    """Max residual of both relatedness squares between ``sp`` and the universal connection.

    Lift square: ``T(sigma x E) . C_sigma(xi, e)`` against ``C_univ(T sigma . xi, e)``.
    Projection square: ``Phi_sigma`` against ``Phi_univ`` on ``T(sigma x E) . Y``.
    """
    sys = sp.sys
    rng = np.random.default_rng(seed)
    xs = sys.base.charts[chart].sample(rng, samples)
    es = sys.fiber.sample(rng, samples)
    worst = 0.0
    for x, e in zip(xs, es):
        xi = rng.normal(size=sys.m)
        w = rng.normal(size=sys.k)
        # lift square
        base_l, vert_l = horizontal_lift(sp, chart, x, xi, e)
        pushed = (base_l, sp.jacobian(chart, x) @ base_l, vert_l)
        X, vert_u = universal_lift(sys, tangent_of_section(sp, chart, x, xi), e)
        worst = max(worst, float(np.max(np.abs(pushed[0] - X.xi))), float(np.max(np.abs(pushed[1] - X.Sdot))),
                    float(np.max(np.abs(pushed[2] - vert_u))))
        # projection square
        left = vertical_projection(sp, chart, x, e, (xi, w))
        right = universal_projection(sys, tangent_of_section(sp, chart, x, xi), w, e)
        worst = max(worst, float(np.max(np.abs(left - right))))
    return worst


relatedness_check_43 = relatedness_check


# ---------------------------------------------------------------------------
# curves in the connection bundle


@dataclass
class CCurve:
    """Curve ``t -> (c(t), S(t))`` in one chart of the connection bundle."""

    base: Curve
    S: Callable[[float], np.ndarray]
    Sdot: Callable[[float], np.ndarray]
    chart: int = 0

    def point(self, t: float) -> ConnPoint:
        return ConnPoint(self.base.eval(t), np.asarray(self.S(t), dtype=float), self.chart)

    def tangent(self, t: float, piece=None) -> TangentC:
        return TangentC(self.base.derivative(t, piece), np.asarray(self.Sdot(t), dtype=float), self.point(t))


def section_curve(sp: Splitting, c: Curve, chart: int = 0) -> CCurve:
    """``sigma o c``."""
    return CCurve(c, lambda t: sp.matrix(chart, c.eval(t)),
                  lambda t: sp.jacobian(chart, c.eval(t)) @ c.derivative(t), chart)


def vertical_segment(x, S0, S1, chart: int = 0) -> CCurve:
    """Affine straight line from ``S0`` to ``S1`` in the fiber over ``x``."""
    S0 = np.asarray(S0, dtype=float)
    S1 = np.asarray(S1, dtype=float)
    return CCurve(ConstantCurve(x), lambda t: (1 - t) * S0 + t * S1, lambda t: S1 - S0, chart)


def require_in_chart(sys: SystemSpec, c: Curve, chart: int, n: int = 64):
    ch = sys.base.charts[chart]
    for t in np.linspace(0.0, 1.0, n + 1):
        if not ch.contains(c.eval(t)):
            raise ChartMismatch(f"curve leaves chart {ch.name} near t={t:.3f}")


def universal_transport(sys: SystemSpec, cc: CCurve, t: float = 1.0, e0=None,
                        steps: Optional[int] = None) -> TransportResult:
    """Transport of the universal connection along a curve in the connection bundle.

    The fiber velocity is ``eta(S(t) c'(t))(e)``; ``S'`` never enters.
    """
    steps = default_steps() if steps is None else steps
    require_in_chart(sys, cc.base, cc.chart)
    rep = sys.rep(cc.chart)
    e = np.asarray(e0, dtype=float)
    knots = [b for b in cc.base.breakpoints if 0.0 < b < t] if hasattr(cc.base, "breakpoints") else []
    edges = [0.0] + sorted(knots) + [t]
    times, states, err = [0.0], [e], 0.0
    for piece, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        if b <= a:
            continue
        j = _piece_index(cc.base, a, b)

        def f(s, p, j=j):
            return rep.eval(np.asarray(cc.S(s)) @ cc.base.derivative(s, j), p)

        res = solve(f, e, a, b, max(1, int(np.ceil(steps * (b - a)))), sys.fiber)
        err += res.error_estimate
        e = res.point
        times.extend(res.times[1:])
        states.extend(res.path[1:])
    times = np.array(times)
    base = np.array([cc.base.eval(s) for s in times])
    return TransportResult(times, base, np.array(states), np.full(len(times), cc.chart), err)


def _piece_index(c: Curve, a: float, b: float) -> Optional[int]:
    bps = getattr(c, "breakpoints", None)
    if not bps:
        return None
    mid = 0.5 * (a + b)
    edges = [0.0] + [x for x in bps if 0.0 < x < 1.0] + [1.0]
    for i in range(len(edges) - 1):
        if edges[i] <= mid <= edges[i + 1]:
            return i
    return None


def transport_via_universal(tau: Splitting, sigma: Splitting, c: Curve, t: float = 1.0, e0=None,
                            steps: Optional[int] = None, chart: Optional[int] = None) -> np.ndarray:
    """``tau``-transport rebuilt from universal transports.

    Start over ``sigma(c(0))``, move vertically to ``tau(c(0))``, follow
    ``tau o c`` and move vertically back to ``sigma(c(t))``.
    """
    sys = tau.sys
    chart = sys.base.chart_of(c.eval(0.0)) if chart is None else chart
    x0, xt = c.eval(0.0), c.eval(t)
    e = np.asarray(e0, dtype=float)
    legs = [
        vertical_segment(x0, sigma.matrix(chart, x0), tau.matrix(chart, x0), chart),
        None,
        vertical_segment(xt, tau.matrix(chart, xt), sigma.matrix(chart, xt), chart),
    ]
    for leg in legs:
        if leg is None:
            e = universal_transport(sys, section_curve(tau, c, chart), t, e, steps).end
        else:
            e = universal_transport(sys, leg, 1.0, e, steps).end
    return e
