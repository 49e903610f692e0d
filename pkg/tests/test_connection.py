import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.linalg import expm

from fibersys.connection import (Splitting, ad_pullback_check, claim2_check, curvature_bracket, curvature_formula,
                                 holonomy_algebra_sample, holonomy_loop, horizontal_lift, radial_paths,
                                 rotation_angle, small_loop_limit, transport_direct, transport_group, transport_map,
                                 vertical_projection, write_trace)
from fibersys.errors import DimensionMismatch, DomainError
from fibersys.geometry import CircularArc, PolynomialCurve, ReparametrizedCurve, segment
from fibersys.poly import Polynomial, random_polynomial

seeds = st.integers(0, 10_000)


def random_curve(rng, scale=0.8):
    return PolynomialCurve(rng.uniform(-scale, scale, size=(4, 2)))


def test_abelian_square_rotates_one_radian(scenarios):
    sc = scenarios("abelian-area")
    hol = holonomy_loop(sc.splitting, sc.curves["square"], [1.0, 0.0], steps=400)
    assert abs(rotation_angle(hol.fiber_map) - 1.0) < 1e-9
    assert np.allclose(hol.end, [math.cos(1.0), math.sin(1.0)], atol=1e-9)


@pytest.mark.parametrize("r", [0.5, 1.3])
def test_abelian_circle_area(scenarios, r):
    sp = scenarios("abelian-area").splitting
    loop = CircularArc([0.4, -0.2], r, 0.0, 2 * math.pi)
    hol = holonomy_loop(sp, loop, [0.0, 1.0], steps=600)
    assert abs(math.remainder(rotation_angle(hol.fiber_map) - math.pi * r * r, 2 * math.pi)) < 1e-8


def test_abelian_open_curve_matches_line_integral(scenarios):
    sp = scenarios("abelian-area").splitting
    c = PolynomialCurve([[0.1, 0.0], [0.5, 1.0], [-0.3, 0.4]])
    integral, _ = quad(lambda t: c.eval(t)[0] * c.derivative(t)[1], 0.0, 1.0)
    F = transport_map(sp, c, 1.0, 300)
    assert abs(rotation_angle(F) - integral) < 1e-9


def test_trivial_splitting_constant_transport(scenarios):
    sc = scenarios("trivial")
    res = transport_direct(sc.splitting, sc.curves["wiggle"], 1.0, [0.3, -1.0], 100)
    assert np.allclose(res.fiber, [0.3, -1.0])


@given(seeds)
def test_direct_and_group_agree(seed):
    from fibersys.scenarios import load_scenario

    rng = np.random.default_rng(seed)
    for name in ("abelian-area", "so3-sphere"):
        sc = load_scenario(name)
        c = random_curve(rng)
        u0 = sc.system.fiber.sample(rng, 1)[0]
        a = transport_direct(sc.splitting, c, 1.0, u0, 200)
        b = transport_group(sc.splitting, c, 1.0, u0, 200)
        assert np.max(np.abs(a.fiber - b.fiber)) < 1e-8


@given(seeds)
def test_transport_back_and_forth(seed):
    from fibersys.scenarios import load_scenario

    sc = load_scenario("so3-sphere")
    rng = np.random.default_rng(seed)
    c = random_curve(rng)
    u0 = sc.system.fiber.sample(rng, 1)[0]
    there = transport_direct(sc.splitting, c, 1.0, u0, 200).end
    back = transport_direct(sc.splitting, c.reversed(), 1.0, there, 200).end
    assert np.allclose(back, u0, atol=1e-9)


def test_reparametrization_invariance(scenarios):
    sp = scenarios("so3-sphere").splitting
    c = segment([0.0, 0.0], [0.7, -0.4])
    slow = ReparametrizedCurve(c, lambda t: t ** 3, lambda t: 3 * t * t)
    u0 = np.array([0.0, 0.6, 0.8])
    a = transport_direct(sp, c, 1.0, u0, 300).end
    b = transport_direct(sp, slow, 1.0, u0, 600).end
    assert np.allclose(a, b, atol=1e-8)


def test_batch_start_points(scenarios):
    sp = scenarios("abelian-area").splitting
    c = segment([1.0, 0.0], [1.0, 0.5])
    res = transport_direct(sp, c, 1.0, np.array([[1.0, 0.0], [0.0, 2.0]]), 100)
    assert res.end.shape == (2, 2)
    assert np.allclose(res.end[0], [math.cos(0.5), math.sin(0.5)], atol=1e-10)


def test_transport_partial_time(scenarios):
    sp = scenarios("abelian-area").splitting
    c = segment([1.0, 0.0], [1.0, 1.0])
    res = transport_group(sp, c, 0.5, [1.0, 0.0], 100)
    assert np.isclose(res.times[-1], 0.5)
    assert abs(rotation_angle(res.end_map) - 0.5) < 1e-10


def test_circle_winding_holonomy(scenarios):
    sc = scenarios("circle-base-winding")
    hol = holonomy_loop(sc.splitting, sc.curves["loop"], [1.0, 0.0], 300)
    assert abs(rotation_angle(hol.fiber_map) - (2 * math.pi * 0.1 - 1.0)) < 1e-9
    assert set(hol.transport.charts) == {0, 1}


def test_lift_and_projection(scenarios):
    sp = scenarios("so3-sphere").splitting
    x, xi, e = [0.2, 0.3], [1.0, -0.5], np.array([0.0, 0.0, 1.0])
    lift = horizontal_lift(sp, 0, x, xi, e)
    assert np.allclose(vertical_projection(sp, 0, x, e, lift), 0.0)
    w = np.array([0.1, 0.2, 0.0])
    assert np.allclose(vertical_projection(sp, 0, x, e, (np.zeros(2), w)), w)


def test_splitting_shape_checked(scenarios):
    sys = scenarios("abelian-area").system
    with pytest.raises(DimensionMismatch):
        Splitting(sys, [Polynomial.zero(2, (2, 2))])


def test_abelian_curvature_is_constant(scenarios):
    sp = scenarios("abelian-area").splitting
    val = curvature_formula(sp, 0, [3.0, -1.0], [1.0, 0.0], [0.0, 1.0])
    assert np.allclose(val.v, [1.0])
    assert np.allclose(curvature_formula(sp, 0, [0.0, 0.0], [0.0, 1.0], [1.0, 0.0]).v, [-1.0])


@given(seeds)
def test_curvature_bracket_matches_formula(seed):
    from fibersys.scenarios import load_scenario

    sys = load_scenario("so3-sphere").system
    rng = np.random.default_rng(seed)
    sp = Splitting(sys, [random_polynomial(rng, 2, (3, 2), 2, 0.5)])
    x = rng.uniform(-1, 1, 2)
    X1, X2 = rng.normal(size=(2, 2))
    e = sys.fiber.sample(rng, 1)[0]
    assert np.allclose(curvature_bracket(sp, 0, x, X1, X2, e),
                       curvature_formula(sp, 0, x, X1, X2).as_field(e), atol=1e-6)


def test_holonomy_algebra_ranks(scenarios):
    x0 = np.zeros(2)
    ends = np.array([[0.5, 0.2], [-0.4, 0.6], [0.3, -0.7]])
    for name, rank in (("trivial", 0), ("abelian-area", 1), ("so3-sphere", 3)):
        est = holonomy_algebra_sample(scenarios(name).splitting, radial_paths(x0, ends), x0, steps=100)
        assert est.rank == rank
        assert est.max_residual < 1e-6
    with pytest.raises(DomainError):
        holonomy_algebra_sample(scenarios("so3-sphere").splitting, radial_paths([1.0, 1.0], ends), x0)


def test_ad_pullback(scenarios):
    sp = scenarios("so3-sphere").splitting
    c = PolynomialCurve([[0.0, 0.0], [0.6, 0.2], [-0.3, 0.4]])
    pts = sp.sys.fiber.sample(np.random.default_rng(1), 3)
    for v in np.eye(3):
        assert ad_pullback_check(sp, c, v, pts, steps=200) < 1e-5


@pytest.mark.parametrize("name", ["abelian-area", "so3-sphere"])
def test_claim2_fundamental(scenarios, name):
    sp = scenarios(name).splitting
    res = claim2_check(sp, [0.1, 0.2], [1.0, 0.0], [0.3, 1.0], [0.0, 0.1], [0.1, 0.2], steps_per_unit=100)
    assert res.max_residual < 1e-4
    assert res.residuals.shape == (2, 2)


def test_small_loop(scenarios):
    res = small_loop_limit(scenarios("so3-sphere").splitting, [0.3, 0.1], [1.0, 0.0], [0.0, 1.0], steps=150)
    assert res.converges(1.0)
    assert res.extrapolated_error < 1e-3
    assert np.all(np.diff(res.errors) < 0)
    with pytest.raises(ValueError):
        small_loop_limit(scenarios("so3-sphere").splitting, [0, 0], [1, 0], [0, 1], epsilons=(0.1, 0.2, 0.05))


def test_write_trace(tmp_path, scenarios):
    sc = scenarios("abelian-area")
    res = transport_group(sc.splitting, segment([0.0, 0.0], [1.0, 1.0]), 1.0, [1.0, 0.0], 10)
    path = tmp_path / "trace.csv"
    write_trace(res, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("t,x0,x1,s0,s1,chart")
    assert len(lines) == 12


def test_abelian_square_group_element(scenarios):
    sc = scenarios("abelian-area")
    F = transport_map(sc.splitting, sc.curves["square"], 1.0, 1000)
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    M1 = sc.system.group.generators[0]
    assert np.allclose(np.linalg.inv(F), expm(M1), atol=1e-8)
    assert np.allclose(F, expm(J), atol=1e-8)
