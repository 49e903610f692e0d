"""Command line entry point: ``fibersys <command> --scenario NAME|FILE``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import connection as conn
from . import reconstruction as recon
from .checks import SUITES, run_check_suite
from .errors import EscapeDetected, FibersysError, ParseError, ValidationError
from .geometry import default_steps
from .scenarios import BUILTINS, load_scenario

EXIT_OK, EXIT_FAIL, EXIT_LOAD = 0, 1, 2


def _floats(text: Optional[str]):
    return None if text is None else np.array([float(v) for v in text.split(",")])


def _emit(payload: dict, fmt: str, out):
    if fmt == "json":
        out.write(json.dumps(payload, indent=2) + "\n")
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    rows = payload.get("rows")
    if rows is None:
        w.writerow(["key", "value"])
        for k, v in payload.items():
            w.writerow([k, json.dumps(v)])
    else:
        w.writerow(list(rows[0].keys()) if rows else [])
        for r in rows:
            w.writerow([json.dumps(v) if isinstance(v, (list, dict)) else v for v in r.values()])
    out.write(buf.getvalue())


def _curve(sc, name: Optional[str]):
    if not sc.curves:
        raise ValidationError("curve", f"scenario {sc.name} defines no curves")
    if name is None:
        name = next(iter(sc.curves))
    if name not in sc.curves:
        raise ValidationError("curve", f"unknown curve {name!r}; have {sorted(sc.curves)}")
    return name, sc.curves[name]


def _u0(sc, text):
    u = _floats(text)
    if u is None:
        u = sc.system.fiber.sample(np.random.default_rng(0), 1)[0]
    return u


def cmd_check(args, sc, out) -> int:
    suites = args.suite.split(",") if args.suite else None
    report = run_check_suite(sc, suites, args.seed, args.steps, args.tol_scale, args.timing)
    if args.output == "json":
        out.write(report.to_json() + "\n")
    else:
        out.write(report.to_csv())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_universal(args, sc, out) -> int:
    args.suite = "universal"
    return cmd_check(args, sc, out)


def cmd_transport(args, sc, out) -> int:
    name, c = _curve(sc, args.curve)
    u0 = _u0(sc, args.u0)
    payload = {"scenario": sc.name, "curve": name, "steps": args.steps, "start": u0.tolist()}
    try:
        if args.method == "group":
            res = conn.transport_group(sc.splitting, c, args.t, u0, args.steps)
        else:
            res = conn.transport_direct(sc.splitting, c, args.t, u0, args.steps)
    except EscapeDetected as exc:
        payload.update({"escaped": True, "t_esc": exc.t_esc, "reason": exc.reason})
        _emit(payload, args.output, out)
        return EXIT_OK if sc.expect.get("complete", True) is False else EXIT_FAIL
    payload.update({"escaped": False, "end": res.end.tolist(), "end_chart": res.end_chart,
                    "error_estimate": res.error_estimate})
    if args.trace:
        conn.write_trace(res, args.trace)
        payload["trace"] = args.trace
    _emit(payload, args.output, out)
    return EXIT_OK


def cmd_curvature(args, sc, out) -> int:
    sys_ = sc.system
    x = _floats(args.x)
    x = sys_.base.charts[0].center if x is None else x
    e = np.eye(sys_.m)
    X1 = e[0] if args.X1 is None else _floats(args.X1)
    X2 = (e[1] if sys_.m > 1 else e[0]) if args.X2 is None else _floats(args.X2)
    chart = sys_.base.chart_of(x)
    val = conn.curvature_formula(sc.splitting, chart, x, X1, X2)
    pts = sys_.fiber.sample(np.random.default_rng(args.seed), 4)
    worst = max(float(np.max(np.abs(conn.curvature_bracket(sc.splitting, chart, x, X1, X2, p) - val.as_field(p))))
                for p in pts)
    payload = {"scenario": sc.name, "x": x.tolist(), "chart": chart, "curvature": val.v.tolist(),
               "bracket_residual": worst}
    _emit(payload, args.output, out)
    return EXIT_OK if worst <= 1e-5 * args.tol_scale else EXIT_FAIL


def cmd_holonomy(args, sc, out) -> int:
    name, c = _curve(sc, args.curve)
    u0 = _u0(sc, args.u0)
    hol = conn.holonomy_loop(sc.splitting, c, u0, args.steps)
    payload = {"scenario": sc.name, "curve": name, "start": u0.tolist(), "end": hol.end.tolist()}
    if hol.fiber_map is not None:
        payload["fiber_map"] = hol.fiber_map.tolist()
        if sc.system.group.fiber_dim == 2 and not sc.system.group.affine:
            payload["angle"] = conn.rotation_angle(hol.fiber_map)
    _emit(payload, args.output, out)
    return EXIT_OK


def cmd_reconstruct(args, sc, out) -> int:
    ratlas = recon.radial_atlas_from_scenario(sc)
    steps = max(args.steps // 5, 100)
    coc = recon.build_cocycle(sc.splitting, ratlas, samples=args.samples, seed=args.seed, steps=steps,
                              tol=1e-6 * args.tol_scale)
    report = recon.reconstruction_report(sc.splitting, coc, seed=args.seed)
    report["scenario"] = sc.name
    if args.output == "json":
        out.write(recon.dump_report(report) + "\n")
    else:
        rows = [{"to": o["to"], "from": o["from"], "worst_inverse_residual": o["worst_inverse_residual"]}
                for o in report["overlaps"]]
        _emit({"rows": rows}, "csv", out)
    ok = max(report["cocycle"]["inverse"], report["cocycle"]["triple"]) <= 1e-6 * args.tol_scale
    ok = ok and all(p["residual"] <= 1e-6 * args.tol_scale for p in report["projection"])
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {
    "check": cmd_check,
    "transport": cmd_transport,
    "curvature": cmd_curvature,
    "holonomy": cmd_holonomy,
    "reconstruct": cmd_reconstruct,
    "universal-check": cmd_universal,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True,
                        help=f"built-in name ({', '.join(BUILTINS)}) or path to a JSON scenario")
    common.add_argument("--steps", type=int, default=None, help="integrator steps per unit parameter")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance")
    common.add_argument("--output", choices=("json", "csv"), default="json")
    common.add_argument("--trace", default=None, help="write a CSV transport trace here")
    common.add_argument("--timing", action="store_true", help="record per-check runtimes")

    p = argparse.ArgumentParser(prog="fibersys", description="Systems of connections on fiber bundles.")
    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", parents=[common], help="run invariant suites")
    c.add_argument("--suite", default=None, help=f"comma separated subset of {','.join(SUITES)}")
    for name in ("transport", "holonomy"):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--curve", default=None)
        s.add_argument("--u0", default=None, help="comma separated start point in the fiber")
        if name == "transport":
            s.add_argument("--t", type=float, default=1.0)
            s.add_argument("--method", choices=("direct", "group"), default="direct")
    s = sub.add_parser("curvature", parents=[common])
    s.add_argument("--x", default=None)
    s.add_argument("--X1", default=None)
    s.add_argument("--X2", default=None)
    s = sub.add_parser("reconstruct", parents=[common])
    s.add_argument("--samples", type=int, default=recon.DEFAULT_OVERLAP_SAMPLES)
    sub.add_parser("universal-check", parents=[common])
    return p


def main(argv: Optional[Sequence[str]] = None, out=None) -> int:
    out = sys.stdout if out is None else out
    args = build_parser().parse_args(argv)
    if args.steps is None:
        args.steps = default_steps()
    try:
        sc = load_scenario(args.scenario)
    except (ParseError, ValidationError) as exc:
        sys.stderr.write(f"fibersys: cannot load scenario: {exc}\n")
        return EXIT_LOAD
    except FibersysError as exc:
        sys.stderr.write(f"fibersys: cannot load scenario: {type(exc).__name__}: {exc}\n")
        return EXIT_LOAD
    try:
        return COMMANDS[args.command](args, sc, out)
    except FibersysError as exc:
        sys.stderr.write(f"fibersys: {type(exc).__name__}: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    raise SystemExit(main())
