import math

import pytest

from fibersys.checks import SUITES, run_check_suite


def _by_name(report):
    return {e.name: e for e in report.entries}


def test_trivial_all_suites(scenarios):
    rep = run_check_suite(scenarios("trivial"), steps=300)
    assert rep.passed
    assert {e.name.split(".")[0] for e in rep.entries} == set(SUITES)
    for e in rep.entries:
        if e.residual is not None and math.isfinite(e.residual):
            assert e.residual < 1e-10, e.name


def test_abelian_holonomy(scenarios):
    rep = run_check_suite(scenarios("abelian-area"), ["holonomy", "curvature"], steps=1000)
    entries = _by_name(rep)
    assert rep.passed
    assert entries["holonomy.loop-angle"].residual < 1e-6
    assert entries["holonomy.algebra-rank"].residual == 0


def test_escape_counts_as_pass(scenarios):
    rep = run_check_suite(scenarios("incomplete-interval"), ["system", "transport"], steps=400)
    entries = _by_name(rep)
    assert rep.passed
    assert entries["transport.escape-time"].residual < 1e-3
    assert "transport.direct-vs-group" not in entries


def test_report_is_reproducible(scenarios):
    a = run_check_suite(scenarios("so3-sphere"), ["transport", "universal"], seed=3, steps=200)
    b = run_check_suite(scenarios("so3-sphere"), ["transport", "universal"], seed=3, steps=200)
    assert a.to_json() == b.to_json()
    assert a.passed


def test_tol_scale_can_force_failures(scenarios):
    rep = run_check_suite(scenarios("so3-sphere"), ["transport"], steps=200, tol_scale=0.0)
    assert not rep.passed


def test_unknown_suite(scenarios):
    with pytest.raises(ValueError):
        run_check_suite(scenarios("trivial"), ["nope"])
