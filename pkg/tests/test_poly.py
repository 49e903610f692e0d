import json

import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from fibersys.poly import Polynomial, bilinear, random_polynomial

seeds = st.integers(0, 10_000)
pts = st.lists(st.floats(-1.5, 1.5, allow_nan=False), min_size=2, max_size=2)


def test_constant_coordinate_zero():
    assert np.allclose(Polynomial.constant(2, [[1.0, 2.0]])([3.0, 4.0]), [[1.0, 2.0]])
    assert Polynomial.coordinate(2, 1)([3.0, 4.0]) == 4.0
    z = Polynomial.zero(2, (1, 2))
    assert z.is_zero() and np.allclose(z([1.0, 1.0]), 0.0)


def test_explicit_values():
    p = Polynomial(2, (), {(2, 1): 3.0, (0, 0): -1.0})
    assert np.isclose(p([2.0, 5.0]), 3 * 4 * 5 - 1)
    assert np.allclose(p.jacobian([2.0, 5.0]), [3 * 2 * 2 * 5, 3 * 4])


@given(seeds, pts)
def test_jacobian_matches_difference(seed, x):
    p = random_polynomial(np.random.default_rng(seed), 2, (2, 3), 3)
    x = np.array(x)
    h = 1e-6
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        fd = (p(x + e) - p(x - e)) / (2 * h)
        assert np.allclose(p.jacobian(x)[..., i], fd, atol=1e-6)
        assert np.allclose(p.partial(i)(x), p.jacobian(x)[..., i], atol=1e-12)


@given(seeds, pts)
def test_algebra_and_json(seed, x):
    rng = np.random.default_rng(seed)
    p = random_polynomial(rng, 2, (2,), 2)
    q = random_polynomial(rng, 2, (2,), 3)
    assert np.allclose((p + q)(x), p(x) + q(x))
    assert np.allclose((p - q)(x), p(x) - q(x))
    assert np.allclose(p.scale(2.5)(x), 2.5 * p(x))
    r = Polynomial.from_json(2, (2,), json.loads(json.dumps(p.to_json())))
    assert np.allclose(r(x), p(x))
    prod = bilinear(p, q, lambda a, b: np.outer(a, b), (2, 2))
    assert np.allclose(prod(x), np.outer(p(x), q(x)))
    assert np.allclose(p.component(1)(x), p(x)[1])


def test_batch_evaluation():
    p = random_polynomial(np.random.default_rng(3), 2, (3, 2), 2)
    X = np.random.default_rng(4).normal(size=(5, 2))
    assert np.allclose(p(X), np.array([p(x) for x in X]))
    assert p.degree() == 2
