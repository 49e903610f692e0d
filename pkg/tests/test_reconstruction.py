import math

import numpy as np
import pytest
from scipy.integrate import quad

from fibersys.connection import rotation_angle
from fibersys.errors import BasisProjectionError, CocycleViolation
from fibersys.reconstruction import (build_bundle_atlas, build_cocycle, center_map, fundamental_field_projection,
                                     loop_element, loop_holonomy_check, radial_atlas_from_scenario,
                                     reconstruction_report, round_trip_check)

STEPS = 150


@pytest.fixture(scope="module")
def circle():
    from fibersys.scenarios import load_scenario

    sc = load_scenario("circle-base-winding")
    return sc, build_cocycle(sc.splitting, radial_atlas_from_scenario(sc), samples=6, steps=STEPS)


def test_circle_cocycle(circle):
    sc, coc = circle
    r = coc.residuals()
    assert r["inverse"] < 1e-10
    assert np.allclose(coc(0, 0, [1.0]), np.eye(2))


def test_circle_chain_reproduces_holonomy(circle):
    sc, coc = circle
    # counterclockwise: north -> south near pi, south -> north near 0
    F = coc(0, 1, np.array([0.0])) @ coc(1, 0, np.array([math.pi]))
    assert abs(rotation_angle(F) - sc.expect["holonomy_angle"]) < 1e-9
    assert loop_holonomy_check(sc.splitting, coc, sc.curves["loop"], STEPS) < 1e-6


def test_circle_round_trip(circle):
    sc, coc = circle
    from fibersys.geometry import Polyline

    curves = [sc.curves["loop"], Polyline([[0.3], [4.0]])]
    assert round_trip_check(sc.splitting, coc, curves, np.array([0.5, -1.0]), STEPS).max_difference < 1e-6


def test_atlas_at_center_is_path_transport(scenarios):
    sc = scenarios("abelian-area")
    ra = radial_atlas_from_scenario(sc)
    A = build_bundle_atlas(sc.splitting, ra, ra.charts[2].center, 2, STEPS)
    assert np.allclose(A, center_map(sc.splitting, ra, 2, STEPS))


def test_abelian_atlas_is_line_integral(scenarios):
    sc = scenarios("abelian-area")
    ra = radial_atlas_from_scenario(sc)
    x = np.array([0.7, 1.1])
    A = build_bundle_atlas(sc.splitting, ra, x, 2, STEPS)
    path = ra.paths[2]
    total = 0.0
    for c in (path, ra.radial(2, x)):
        for a, b in zip(c.breakpoints[:-1], c.breakpoints[1:]):
            total += quad(lambda t: c.eval(t)[0] * c.derivative(t, None)[1], a, b)[0]
    assert abs(rotation_angle(A) - total) < 1e-9


def test_flat_cocycle_is_identity(scenarios):
    sc = scenarios("trivial")
    coc = build_cocycle(sc.splitting, radial_atlas_from_scenario(sc), samples=3, steps=50)
    for key, pts in coc.samples.items():
        if len(key) == 2:
            assert np.allclose(coc(key[0], key[1], pts[0]), np.eye(2))


@pytest.mark.parametrize("name", ["abelian-area", "so3-sphere"])
def test_plane_cocycle_and_loop(scenarios, name):
    sc = scenarios(name)
    ra = radial_atlas_from_scenario(sc)
    coc = build_cocycle(sc.splitting, ra, samples=3, steps=STEPS)
    assert coc.max_residual < 1e-6
    assert any(len(k) == 3 for k in coc.samples)
    x = coc.samples[(1, 0)][0]
    assert np.max(np.abs(loop_element(sc.splitting, ra, 1, 0, x, STEPS) - coc(1, 0, x))) < 1e-6


def test_cocycle_violation_reported(scenarios):
    sc = scenarios("abelian-area")
    with pytest.raises(CocycleViolation) as info:
        build_cocycle(sc.splitting, radial_atlas_from_scenario(sc), samples=2, steps=20, tol=-1.0)
    assert info.value.residual >= 0.0


def test_projection_examples(scenarios):
    sc = scenarios("abelian-area")
    w, r = fundamental_field_projection(sc.splitting, 0, [2.0, 0.0], [0.0, 1.0])
    assert np.allclose(w, [2.0]) and r < 1e-10
    w0, r0 = fundamental_field_projection(sc.splitting.scaled(0.0), 0, [2.0, 0.0], [0.0, 1.0])
    assert np.allclose(w0, 0.0) and r0 == 0.0
    with pytest.raises(BasisProjectionError):
        fundamental_field_projection(sc.splitting, 0, [2.0, 0.0], [0.0, 1.0],
                                     field=lambda s: np.array([s[0] ** 2, 0.0]))


def test_projection_all_scenarios(scenarios):
    for name in ("trivial", "abelian-area", "so3-sphere", "circle-base-winding", "translation-line"):
        sc = scenarios(name)
        rng = np.random.default_rng(0)
        for a, ch in enumerate(sc.system.base.charts):
            for x in ch.sample(rng, 3):
                _, r = fundamental_field_projection(sc.splitting, a, x, rng.normal(size=sc.system.m))
                assert r < 1e-6


def test_report(circle):
    sc, coc = circle
    rep = reconstruction_report(sc.splitting, coc, projection_points=2)
    assert set(rep) == {"cocycle", "overlaps", "projection"}
    assert rep["overlaps"][0]["samples"][0]["element"]
    import json

    json.dumps(rep)
