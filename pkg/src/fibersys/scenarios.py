"""Scenario files (schema ``fibersys/1``) and the built-in scenarios."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .connection import Splitting
from .errors import FibersysError, ParseError, ValidationError
from .geometry import (CircularArc, ConstantCurve, Curve, EuclideanFiber, Polyline, PolynomialCurve,
                       SphereFiber, TorusFiber, square_loop)
from .lie import ROTATION_2D, LieAlgebra, MatrixGroup, Representation, so3_generators
from .poly import Polynomial
from .system import BaseAtlas, SystemSpec, Transitions, make_chart

SCHEMA = "fibersys/1"
BIG = 1e3


@dataclass
class RadialAtlasSpec:
    x0: np.ndarray
    charts: list  # Chart objects
    paths: list  # Curve from x0 to each center


@dataclass
class Scenario:
    name: str
    system: SystemSpec
    splitting: Splitting
    curves: dict = field(default_factory=dict)
    expect: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    radial: Optional[RadialAtlasSpec] = None
    parent: Optional[str] = None
    raw: dict = field(default_factory=dict)

    def tol(self, key: str, default: float, scale: float = 1.0) -> float:
        return float(self.tolerances.get(key, default)) * scale


# ---------------------------------------------------------------------------
# builtin definitions (plain JSON-compatible dicts)


def _plane_base():
    return {"dim": 2, "charts": [{"name": "R2", "lo": [-BIG, -BIG], "hi": [BIG, BIG], "center": [0.0, 0.0]}]}


def _line_base():
    return {"dim": 1, "charts": [{"name": "R", "lo": [-BIG], "hi": [BIG], "center": [0.0]}]}


def _three_box_radial():
    return {
        "x0": [0.0, 0.0],
        "charts": [
            {"name": "A", "lo": [-1.0, -1.0], "hi": [1.0, 1.0], "center": [0.0, 0.0], "path": [[0.0, 0.0], [0.0, 0.0]]},
            {"name": "B", "lo": [0.0, -1.0], "hi": [2.0, 1.0], "center": [1.0, 0.0], "path": [[0.0, 0.0], [1.0, 0.0]]},
            {"name": "C", "lo": [-0.5, -0.2], "hi": [1.5, 1.8], "center": [0.5, 0.8], "path": [[0.0, 0.0], [0.5, 0.0], [0.5, 0.8]]},
        ],
    }


def _so2_group():
    return {"kind": "rotation", "generators": [(-ROTATION_2D).tolist()]}


def _builtin_trivial():
    return {
        "schema": SCHEMA,
        "name": "trivial",
        "system": {"base": _plane_base(), "fiber": {"kind": "euclidean", "dim": 2}, "group": _so2_group()},
        "splitting": "zero",
        "curves": {
            "square": {"type": "square", "corner": [0.0, 0.0], "size": 1.0},
            "wiggle": {"type": "polynomial", "coeffs": [[0.0, 0.0], [1.0, -0.5], [0.3, 0.7]]},
        },
        "expect": {"holonomy_angle": 0.0, "complete": True, "holonomy_rank": 0},
        "reconstruction": _three_box_radial(),
    }


def _builtin_abelian():
    return {
        "schema": SCHEMA,
        "name": "abelian-area",
        "system": {"base": _plane_base(), "fiber": {"kind": "euclidean", "dim": 2}, "group": _so2_group()},
        # sigma = x dy (x) e_1
        "splitting": {"charts": [[{"exp": [1, 0], "coef": [[0.0, 1.0]]}]]},
        "curves": {
            "square": {"type": "square", "corner": [0.0, 0.0], "size": 1.0},
            "arc": {"type": "arc", "center": [0.0, 0.0], "radius": 1.0, "angle0": 0.0, "angle1": 2.0},
        },
        "expect": {"holonomy_angle": 1.0, "complete": True, "holonomy_rank": 1},
        "reconstruction": _three_box_radial(),
    }


def _so3_splitting():
    # S(x, y) as d x m = 3 x 2 coefficient matrices per monomial
    return {"charts": [[
        {"exp": [0, 0], "coef": [[0.3, 0.0], [0.0, 0.4], [0.0, -0.3]]},
        {"exp": [1, 0], "coef": [[0.0, 0.2], [0.0, 0.0], [0.0, 0.25]]},
        {"exp": [0, 1], "coef": [[0.5, 0.0], [0.0, 0.1], [0.0, 0.0]]},
        {"exp": [1, 1], "coef": [[0.0, 0.0], [-0.2, 0.0], [0.6, 0.0]]},
        {"exp": [2, 0], "coef": [[0.0, 0.0], [0.15, 0.0], [0.0, 0.0]]},
    ]]}


def _builtin_so3():
    return {
        "schema": SCHEMA,
        "name": "so3-sphere",
        "system": {
            "base": _plane_base(),
            "fiber": {"kind": "sphere", "dim": 3},
            "group": {"kind": "rotation", "generators": so3_generators().tolist()},
        },
        "splitting": _so3_splitting(),
        "curves": {
            "loop": {"type": "square", "corner": [0.0, 0.0], "size": 0.8},
            "arc": {"type": "arc", "center": [0.2, 0.1], "radius": 0.7, "angle0": 0.0, "angle1": 3.0},
        },
        "expect": {"complete": True, "holonomy_rank": 3},
        "reconstruction": _three_box_radial(),
    }


def _translation_group():
    return {"kind": "affine", "generators": [[[0.0, -1.0], [0.0, 0.0]]]}


def _builtin_translation():
    return {
        "schema": SCHEMA,
        "name": "translation-line",
        "system": {"base": _line_base(), "fiber": {"kind": "euclidean", "dim": 1}, "group": _translation_group()},
        "splitting": {"charts": [[{"exp": [0], "coef": [[1.0]]}]]},
        "curves": {
            "unit": {"type": "polyline", "points": [[0.0], [1.0]]},
            "long": {"type": "polyline", "points": [[0.0], [100.0]]},
        },
        "expect": {"complete": True},
    }


def _builtin_incomplete():
    d = _builtin_translation()
    d["name"] = "incomplete-interval"
    d["system"]["fiber"]["restrict"] = {"box": {"lo": [0.0], "hi": [1.0]}}
    d["expect"] = {"complete": False, "escape_time": 0.5, "escape_start": [0.5]}
    d["parent"] = "translation-line"
    return d


WINDING_ANGLE = 1.0
CIRCLE_FORM = 0.1


def _builtin_circle():
    two_pi = 2 * math.pi
    c, s = math.cos(WINDING_ANGLE), math.sin(WINDING_ANGLE)
    sigma = [{"exp": [0], "coef": [[CIRCLE_FORM]]}]
    return {
        "schema": SCHEMA,
        "name": "circle-base-winding",
        "system": {
            "base": {
                "dim": 1,
                "period": [two_pi],
                "charts": [
                    {"name": "north", "lo": [-0.5], "hi": [math.pi + 0.5], "center": [math.pi / 2]},
                    {"name": "south", "lo": [math.pi - 0.5], "hi": [two_pi + 0.5], "center": [1.5 * math.pi]},
                ],
            },
            "fiber": {"kind": "euclidean", "dim": 2},
            "group": _so2_group(),
            "transitions": [
                {"to": 1, "from": 0, "lo": [-1.0], "hi": [1.0], "matrix": [[c, -s], [s, c]]},
            ],
        },
        "splitting": {"charts": [sigma, sigma]},
        "curves": {"loop": {"type": "polyline", "points": [[math.pi / 2], [math.pi / 2 + two_pi]]}},
        "expect": {"complete": True, "holonomy_angle": two_pi * CIRCLE_FORM - WINDING_ANGLE, "holonomy_rank": 0},
        "reconstruction": {
            "x0": [math.pi / 2],
            "charts": [
                {"name": "north", "lo": [-0.5], "hi": [math.pi + 0.5], "center": [math.pi / 2],
                 "path": [[math.pi / 2], [math.pi / 2]]},
                {"name": "south", "lo": [math.pi - 0.5], "hi": [two_pi + 0.5], "center": [1.5 * math.pi],
                 "path": [[math.pi / 2], [1.5 * math.pi]]},
            ],
        },
    }


BUILTINS = {
    "trivial": _builtin_trivial,
    "abelian-area": _builtin_abelian,
    "so3-sphere": _builtin_so3,
    "translation-line": _builtin_translation,
    "incomplete-interval": _builtin_incomplete,
    "circle-base-winding": _builtin_circle,
}


def builtin_dict(name: str) -> dict:
    return copy.deepcopy(BUILTINS[name]())


# ---------------------------------------------------------------------------
# parsing


def _req(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise ValidationError("schema", f"{where}: missing '{key}'")
    return d[key]


def _array(value, where: str, ndim: Optional[int] = None) -> np.ndarray:
    try:
        a = np.array(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError("schema", f"{where}: not numeric ({exc})") from None
    if ndim is not None and a.ndim != ndim:
        raise ValidationError("schema", f"{where}: expected {ndim}-d array, got shape {a.shape}")
    return a


def parse_base(d: dict) -> BaseAtlas:
    dim = int(_req(d, "dim", "system.base"))
    period = d.get("period")
    per = None
    if period is not None:
        per = np.array([math.inf if p is None else float(p) for p in period])
    charts = []
    for i, c in enumerate(_req(d, "charts", "system.base")):
        where = f"system.base.charts[{i}]"
        charts.append(make_chart(c.get("name", str(i)), _array(_req(c, "lo", where), where, 1),
                                 _array(_req(c, "hi", where), where, 1),
                                 c.get("center"), per))
    return BaseAtlas(dim, charts)


def parse_fiber(d: dict):
    kind = _req(d, "kind", "system.fiber")
    dim = int(d.get("dim", 3 if kind == "sphere" else 1))
    if kind == "euclidean":
        fiber = EuclideanFiber(dim)
    elif kind == "torus":
        fiber = TorusFiber(dim, float(d.get("period", 2 * math.pi)))
    elif kind == "sphere":
        if dim != 3:
            raise ValidationError("fiber", "sphere fiber is S^2 in R^3")
        fiber = SphereFiber()
    else:
        raise ValidationError("fiber", f"unknown fiber kind {kind!r}")
    restrict = d.get("restrict")
    if restrict:
        if "box" in restrict:
            lo = _array(restrict["box"]["lo"], "restrict.box.lo", 1)
            hi = _array(restrict["box"]["hi"], "restrict.box.hi", 1)
            fiber = fiber.restricted(lambda s, lo=lo, hi=hi: bool(np.all(s > lo) and np.all(s < hi)),
                                     f"box{lo.tolist()}-{hi.tolist()}")
        elif "ball" in restrict:
            r = float(restrict["ball"])
            fiber = fiber.restricted(lambda s, r=r: bool(np.linalg.norm(s) < r), f"ball{r}")
        else:
            raise ValidationError("fiber", "restrict must be 'box' or 'ball'")
    return fiber


def parse_system(d: dict, name: str) -> SystemSpec:
    base = parse_base(_req(d, "base", "system"))
    fiber = parse_fiber(_req(d, "fiber", "system"))
    declared = None
    if "structure_constants" in d:
        declared = LieAlgebra(_array(d["structure_constants"], "system.structure_constants", 3))
    group = None
    if "group" in d:
        g = d["group"]
        group = MatrixGroup(_req(g, "kind", "system.group"), _array(_req(g, "generators", "system.group"),
                                                                      "system.group.generators", 3), declared)
        algebra = group.algebra
        if group.fiber_dim != fiber.dim:
            raise ValidationError("group", "group action dimension differs from the fiber dimension")
    else:
        if declared is None:
            raise ValidationError("schema", "system needs 'group' or 'structure_constants'")
        algebra = declared
    action = d.get("action", "group" if group is not None else "representation")
    if action == "group":
        rep = group.representation()
    elif action == "trivial":
        rep = Representation.trivial(algebra, fiber.dim)
    elif action == "representation":
        r = _req(d, "representation", "system")
        rep = Representation(algebra, _array(r["A"], "representation.A", 3), r.get("b"))
    else:
        raise ValidationError("schema", f"unknown action {action!r}")
    transitions = None
    if d.get("transitions"):
        if group is None:
            raise ValidationError("transitions", "fiber transitions require group data")
        transitions = Transitions(group.size, period=None if base.charts[0].period is None else base.charts[0].period)
        for i, t in enumerate(d["transitions"]):
            where = f"system.transitions[{i}]"
            M = _array(_req(t, "matrix", where), where, 2)
            if group.membership_residual(M) > 1e-9:
                raise ValidationError("transition-membership", f"{where}: matrix not in the group")
            transitions.add(int(_req(t, "to", where)), int(_req(t, "from", where)), t["lo"], t["hi"], M)
    return SystemSpec(base, fiber, algebra, tuple(rep for _ in base.charts), group, transitions, name)


def parse_splitting(sys: SystemSpec, d) -> Splitting:
    if d is None or d == "zero":
        return Splitting.zero(sys)
    charts = _req(d, "charts", "splitting")
    if len(charts) != len(sys.base.charts):
        raise ValidationError("splitting", "one coefficient list per chart required")
    polys = []
    for i, terms in enumerate(charts):
        try:
            polys.append(Polynomial.from_json(sys.m, (sys.d, sys.m), terms))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValidationError("splitting", f"chart {i}: {exc}") from None
    return Splitting(sys, polys)


def parse_curve(d: dict, where: str) -> Curve:
    kind = _req(d, "type", where)
    if kind == "polyline":
        return Polyline(_array(d["points"], where, 2))
    if kind == "polynomial":
        return PolynomialCurve(_array(d["coeffs"], where, 2))
    if kind == "arc":
        return CircularArc(d["center"], d["radius"], d["angle0"], d["angle1"])
    if kind == "square":
        return square_loop(d["corner"], float(d["size"]))
    if kind == "constant":
        return ConstantCurve(d["point"])
    raise ValidationError("curve", f"{where}: unknown curve type {kind!r}")


def parse_radial(d: Optional[dict], base: BaseAtlas) -> Optional[RadialAtlasSpec]:
    if d is None:
        return None
    per = base.charts[0].period
    charts, paths = [], []
    for i, c in enumerate(d["charts"]):
        charts.append(make_chart(c.get("name", str(i)), c["lo"], c["hi"], c.get("center"), per))
        paths.append(Polyline(_array(c["path"], f"reconstruction.charts[{i}].path", 2)))
    return RadialAtlasSpec(np.asarray(d["x0"], dtype=float), charts, paths)


def scenario_from_dict(d: dict, validate: bool = True) -> Scenario:
    if not isinstance(d, dict):
        raise ValidationError("schema", "scenario must be a JSON object")
    schema = d.get("schema")
    if schema != SCHEMA:
        raise ValidationError("schema", f"expected schema {SCHEMA!r}, got {schema!r}")
    name = str(d.get("name", "scenario"))
    try:
        sys = parse_system(_req(d, "system", "scenario"), name)
        sp = parse_splitting(sys, d.get("splitting"))
    except FibersysError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError("schema", str(exc)) from None
    if validate:
        sys.validate()
        res = sp.compatibility_residual(np.random.default_rng(0))
        if res > 1e-7:
            raise ValidationError("splitting-compatibility", f"residual {res:.3e}")
    curves = {k: parse_curve(v, f"curves.{k}") for k, v in d.get("curves", {}).items()}
    return Scenario(name, sys, sp, curves, dict(d.get("expect", {})), dict(d.get("tolerances", {})),
                    parse_radial(d.get("reconstruction"), sys.base), d.get("parent"), d)


def load_scenario(ref: str | Path) -> Scenario:
    """Load a built-in scenario by name or a ``fibersys/1`` JSON file."""
    ref_s = str(ref)
    if ref_s in BUILTINS:
        return scenario_from_dict(builtin_dict(ref_s))
    path = Path(ref_s)
    if not path.exists():
        raise ParseError(ref_s, "no such file or built-in scenario")
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{ref_s}:{exc.lineno}:{exc.colno}", exc.msg) from None
    return scenario_from_dict(data)
