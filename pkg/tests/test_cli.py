import csv
import io
import json
import math
import subprocess
import sys

import pytest

from fibersys.cli import main
from fibersys.scenarios import builtin_dict


def run(*argv):
    out = io.StringIO()
    rc = main(list(argv), out)
    return rc, out.getvalue()


def test_check_passes_and_is_deterministic():
    argv = ("check", "--scenario", "trivial", "--steps", "200", "--suite", "system,transport,holonomy")
    rc, a = run(*argv)
    _, b = run(*argv)
    assert rc == 0
    assert a == b
    report = json.loads(a)
    assert report["passed"] and all(c["runtime"] is None for c in report["checks"])


def test_check_fails_on_wrong_expectation(tmp_path):
    d = builtin_dict("abelian-area")
    d["expect"]["holonomy_angle"] = 2.0
    path = tmp_path / "wrong.json"
    path.write_text(json.dumps(d))
    rc, text = run("check", "--scenario", str(path), "--suite", "holonomy", "--steps", "500")
    assert rc == 1
    entry = next(c for c in json.loads(text)["checks"] if c["name"] == "holonomy.loop-angle")
    assert entry["status"] == "fail"


def test_load_failure_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"schema": "fibersys/1", "name": }')
    rc, _ = run("holonomy", "--scenario", str(path))
    assert rc == 2
    assert f"{path}:1:" in capsys.readouterr().err


def test_csv_output():
    rc, text = run("check", "--scenario", "trivial", "--suite", "system", "--output", "csv")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert rc == 0 and rows and all(r["status"] == "pass" for r in rows)


def test_holonomy_angle():
    rc, text = run("holonomy", "--scenario", "abelian-area", "--steps", "1000")
    assert rc == 0
    assert abs(json.loads(text)["angle"] - 1.0) < 1e-6


def test_transport_trace(tmp_path):
    trace = tmp_path / "trace.csv"
    rc, text = run("transport", "--scenario", "so3-sphere", "--curve", "arc", "--u0", "0,0,1",
                   "--method", "group", "--steps", "100", "--trace", str(trace))
    assert rc == 0
    rows = list(csv.reader(trace.open()))
    assert rows[0][:3] == ["t", "x0", "x1"] and "g00" in rows[0]
    end = json.loads(text)["end"]
    assert abs(math.fsum(v * v for v in end) - 1.0) < 1e-10


def test_transport_escape():
    rc, text = run("transport", "--scenario", "incomplete-interval", "--u0", "0.5", "--steps", "200")
    payload = json.loads(text)
    assert rc == 0 and payload["escaped"]
    assert abs(payload["t_esc"] - 0.5) < 1e-3


def test_curvature_command():
    rc, text = run("curvature", "--scenario", "abelian-area", "--x", "0.3,0.2")
    assert rc == 0
    assert json.loads(text)["bracket_residual"] < 1e-8


def test_reconstruct_json():
    rc, text = run("reconstruct", "--scenario", "circle-base-winding", "--samples", "4", "--steps", "500")
    rep = json.loads(text)
    assert rc == 0 and rep["scenario"] == "circle-base-winding"
    assert max(rep["cocycle"]["inverse"], rep["cocycle"]["triple"]) < 1e-6


def test_universal_check():
    rc, text = run("universal-check", "--scenario", "abelian-area", "--steps", "200")
    assert rc == 0
    assert {c["name"].split(".")[0] for c in json.loads(text)["checks"]} == {"universal"}


def test_unknown_curve_is_failure():
    assert run("holonomy", "--scenario", "abelian-area", "--curve", "nope")[0] == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "fibersys", "check", "--scenario", "trivial", "--suite",
                           "system", "--output", "csv"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("name,status")


@pytest.mark.parametrize("flag", ["--timing"])
def test_timing_flag(flag):
    _, text = run("check", "--scenario", "trivial", "--suite", "system", flag)
    assert all(c["runtime"] is not None for c in json.loads(text)["checks"])
