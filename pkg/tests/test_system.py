import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fibersys.errors import ChartMismatch, CocycleViolation, EmptyFiber, ValidationError
from fibersys.geometry import EuclideanFiber
from fibersys.lie import LieAlgebra, MatrixGroup, Representation
from fibersys.poly import Polynomial, random_polynomial
from fibersys.system import (BaseAtlas, Complete, Escaped, FunctionTransitions, SectionH, SystemSpec,
                             build_associated_system, bracket_H, check_monic, completeness_probe, eval_eta,
                             make_chart, pushforward_residual, restrict_to_subbundle, vertical_section)


def test_eval_eta_examples(scenarios):
    sys = scenarios("abelian-area").system
    base, vert = eval_eta(sys, 0, [0.0, 0.0], [0.0, 0.0], [1.0], [1.0, 0.0])
    assert np.allclose(base, 0.0) and np.allclose(vert, [0.0, 1.0])
    _, zero = eval_eta(sys, 0, [0.0, 0.0], [1.0, 2.0], [0.0], [1.0, 0.0])
    assert np.allclose(zero, 0.0)
    _, twice = eval_eta(sys, 0, [0.0, 0.0], [0.0, 0.0], [2.0], [0.3, 0.7])
    _, once = eval_eta(sys, 0, [0.0, 0.0], [0.0, 0.0], [1.0], [0.3, 0.7])
    assert np.allclose(twice, 2 * once)


def test_eval_eta_outside_chart(scenarios):
    sys = scenarios("circle-base-winding").system
    with pytest.raises(ChartMismatch):
        eval_eta(sys, 0, [3 * math.pi / 2], [1.0], [1.0], [1.0, 0.0])


def _const(m, shape, value):
    return Polynomial.constant(m, np.broadcast_to(np.asarray(value, dtype=float), shape))


def test_bracket_of_constant_vertical_sections(scenarios):
    sys = scenarios("so3-sphere").system
    h1 = vertical_section(0, _const(2, (3,), [1.0, 0.0, 0.0]))
    h2 = vertical_section(0, _const(2, (3,), [0.0, 1.0, 0.0]))
    hb = bracket_H(sys, h1, h2)
    assert hb.is_vertical
    assert np.allclose(hb.v([0.4, -0.2]), [0.0, 0.0, 1.0])
    assert bracket_H(sys, h1, h1).v.is_zero(1e-15)


def test_bracket_directional_derivative(scenarios):
    sys = scenarios("abelian-area").system
    zero_v = Polynomial.zero(2, (1,))
    h1 = SectionH(0, _const(2, (2,), [1.0, 0.0]), zero_v)
    x_e1 = Polynomial(2, (1,), {(1, 0): [1.0]})
    h2 = SectionH(0, Polynomial.zero(2, (2,)), x_e1)
    hb = bracket_H(sys, h1, h2)
    assert np.allclose(hb.X([0.3, 0.9]), 0.0)
    assert np.allclose(hb.v([0.3, 0.9]), [1.0])


@given(st.integers(0, 1000))
def test_section_bracket_maps_to_field_bracket(seed):
    from fibersys.scenarios import load_scenario

    sys = load_scenario("so3-sphere").system
    rng = np.random.default_rng(seed)
    h1 = SectionH(0, random_polynomial(rng, 2, (2,), 1, 0.5), random_polynomial(rng, 2, (3,), 2, 0.5))
    h2 = SectionH(0, random_polynomial(rng, 2, (2,), 1, 0.5), random_polynomial(rng, 2, (3,), 2, 0.5))
    pts = np.hstack([rng.uniform(-1, 1, size=(3, 2)), rng.normal(size=(3, 3))])
    assert pushforward_residual(sys, h1, h2, pts) < 1e-6


def test_completeness_examples(scenarios):
    rot = scenarios("abelian-area").system
    assert isinstance(completeness_probe(rot, 0, [0.0, 0.0], [0.0], 5.0), Complete)
    assert isinstance(completeness_probe(rot, 0, [0.0, 0.0], [1.3], 100.0, samples=3, steps_per_unit=10), Complete)
    inc = scenarios("incomplete-interval").system
    res = completeness_probe(inc, 0, [0.0], [1.0], 2.0, starts=[[0.5]])
    assert isinstance(res, Escaped) and abs(abs(res.t_esc) - 0.5) < 1e-6


def test_restriction(scenarios):
    rot = scenarios("abelian-area").system
    disk = restrict_to_subbundle(rot, lambda s: float(np.linalg.norm(s)) < 1.0, "disk")
    assert isinstance(completeness_probe(disk, 0, [0.0, 0.0], [1.0], 20.0, samples=3), Complete)
    same = restrict_to_subbundle(rot, lambda s: True, "all")
    assert same.k == rot.k
    with pytest.raises(EmptyFiber):
        restrict_to_subbundle(rot, lambda s: False, "none")
    line = scenarios("translation-line").system
    half = restrict_to_subbundle(line, lambda s: 0.0 < s[0] < 1.0, "unit")
    assert isinstance(completeness_probe(half, 0, [0.0], [1.0], 2.0), Escaped)


def test_monic(scenarios):
    assert check_monic(scenarios("abelian-area").system)
    assert check_monic(scenarios("so3-sphere").system)
    rot = scenarios("abelian-area").system
    trivial = SystemSpec(rot.base, rot.fiber, rot.algebra, (Representation.trivial(rot.algebra, 2),),
                         None, None, "trivial-action")
    assert not check_monic(trivial)


def _circle_base():
    per = [2 * math.pi]
    return BaseAtlas(1, [make_chart("n", [-0.5], [math.pi + 0.5], [math.pi / 2], per),
                         make_chart("s", [math.pi - 0.5], [2 * math.pi + 0.5], [1.5 * math.pi], per)])


def test_associated_system_rejects_non_cocycle():
    G = MatrixGroup("rotation", [[[0.0, 1.0], [-1.0, 0.0]]])
    bad = FunctionTransitions(2, lambda b, a, x: np.eye(2) if a == b else np.array([[0.0, -1.0], [1.0, 0.0]]))
    with pytest.raises(CocycleViolation):
        build_associated_system(_circle_base(), bad, G, EuclideanFiber(2))


def test_associated_system_trivial_cocycle():
    G = MatrixGroup("rotation", [[[0.0, 1.0], [-1.0, 0.0]]])
    triv = FunctionTransitions(2, lambda b, a, x: np.eye(2))
    sys = build_associated_system(_circle_base(), triv, G, EuclideanFiber(2))
    assert np.allclose(sys.change_chart(1, 0, [math.pi], [1.0, 2.0]), [1.0, 2.0])
    sys.validate()


def test_chart_validation():
    with pytest.raises(ValidationError):
        BaseAtlas(1, [make_chart("bad", [0.0], [1.0], [2.0])])
    with pytest.raises(ValidationError):
        BaseAtlas(1, [])


def test_periodic_chart_local():
    ch = make_chart("s", [math.pi - 0.5], [2 * math.pi + 0.5], [1.5 * math.pi], [2 * math.pi])
    assert ch.contains([0.1])
    assert np.isclose(ch.local([0.1])[0], 0.1 + 2 * math.pi)


def test_validate_checks_algebra(scenarios):
    sys = scenarios("trivial").system
    sys.validate()
    assert isinstance(sys.algebra, LieAlgebra)
