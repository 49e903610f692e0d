import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fibersys.errors import BasisProjectionError, LogBranchError, ValidationError
from fibersys.lie import (Ad, LieAlgebra, MatrixGroup, Representation, exp, integrate_left_invariant, log,
                          so3_generators)

small = st.lists(st.floats(-0.8, 0.8, allow_nan=False), min_size=3, max_size=3)


def hat(w):
    return np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])


def rodrigues(w):
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    if th < 1e-15:
        return np.eye(3)
    K = hat(w / th)
    return np.eye(3) + np.sin(th) * K + (1 - np.cos(th)) * K @ K


@pytest.fixture
def so3():
    return MatrixGroup("rotation", so3_generators())


def test_so3_structure(so3):
    L = so3_generators()
    assert np.allclose(L[0] @ L[1] - L[1] @ L[0], L[2])
    assert np.allclose(so3.algebra.bracket([1, 0, 0], [0, 1, 0]), [0, 0, 1])
    assert so3.algebra.jacobi_residual() < 1e-15


def test_jacobi_violation_rejected():
    c = np.zeros((3, 3, 3))
    c[0, 1] = [0, 0, 1]
    c[1, 0] = [0, 0, -1]
    c[0, 2] = [1, 0, 0]
    c[2, 0] = [-1, 0, 0]
    c[1, 2] = [0, 1, 0]
    c[2, 1] = [0, -1, 0]
    with pytest.raises(ValidationError) as info:
        LieAlgebra(c)
    assert info.value.invariant == "jacobi"


def test_antisymmetry_violation_rejected():
    c = np.zeros((2, 2, 2))
    c[0, 1] = [1, 0]
    with pytest.raises(ValidationError) as info:
        LieAlgebra(c)
    assert info.value.invariant == "antisymmetry"


def test_closure_violation_rejected():
    with pytest.raises(ValidationError):
        MatrixGroup("general", [[[0, 1], [0, 0]], [[0, 0], [1, 0]]])


@given(small)
def test_exp_matches_rodrigues(w):
    assert np.allclose(exp(hat(w)), rodrigues(w), atol=1e-12)


@given(small)
def test_log_inverts_exp(w):
    assert np.allclose(log(exp(hat(w)), max_dist=2.0), hat(w), atol=1e-10)


def test_log_branch_guard():
    with pytest.raises(LogBranchError):
        log(rodrigues([3.0, 0.0, 0.0]))


@given(small, small)
def test_ad_is_rotation_of_axis(w, v):
    g = rodrigues(w)
    so3 = MatrixGroup("rotation", so3_generators())
    assert np.allclose(Ad(so3, g, v), g @ np.array(v), atol=1e-12)


def test_ad_rejects_outside_algebra():
    G = MatrixGroup("affine", [[[0.0, -1.0], [0.0, 0.0]]])
    # conjugating a translation by a shear-rotation leaves the translation algebra
    g = np.array([[1.0, 1.0], [1.0, 2.0]])
    assert G.membership_residual(g) > 0.5
    with pytest.raises(BasisProjectionError):
        Ad(G, g, [1.0])


@given(small)
def test_left_invariant_constant_speed(w):
    so3 = MatrixGroup("rotation", so3_generators())
    path = integrate_left_invariant(so3, lambda t: np.array(w), 1.0, 100)
    assert np.allclose(path.end, rodrigues(w), atol=1e-9)
    assert so3.membership_residual(path.end) < 1e-12


def test_representation_is_homomorphism(so3):
    rep = so3.representation()
    pts = np.random.default_rng(0).normal(size=(6, 3))
    assert rep.homomorphism_residual(pts) < 1e-12
    # fundamental field of e_i is s -> -L_i s
    s = np.array([0.3, 0.1, -2.0])
    assert np.allclose(rep.eval([1, 0, 0], s), -so3_generators()[0] @ s)


def test_affine_representation():
    G = MatrixGroup("affine", [[[0.0, -1.0], [0.0, 0.0]]])
    rep = G.representation()
    assert np.allclose(rep.eval([1.0], [5.0]), [1.0])
    assert np.allclose(G.act_left(exp(G.matrix([2.0])), [0.5]), [-1.5])
    assert np.allclose(G.act_right([0.5], exp(G.matrix([2.0]))), [2.5])


def test_trivial_representation():
    alg = LieAlgebra.abelian(2)
    rep = Representation.trivial(alg, 3)
    assert np.allclose(rep.eval([1.0, 2.0], [1.0, 1.0, 1.0]), 0.0)


def test_project_restores_rotation(so3):
    g = rodrigues([0.3, -0.2, 0.1]) + 1e-4
    p = so3.project(g)
    assert so3.membership_residual(p) < 1e-12
    assert np.linalg.norm(p - g) < 1e-3
