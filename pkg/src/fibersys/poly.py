"""Array-valued polynomials on R^m with exact derivatives."""

from __future__ import annotations

from typing import Callable, Iterable, Mapping

import numpy as np


class Polynomial:
    """``p(x) = sum_e coef_e * x^e`` with ``coef_e`` arrays of a common shape.

    Terms are stored as a mapping from exponent tuples to coefficient arrays.
    """

    def __init__(self, m: int, shape, terms: Mapping[tuple, np.ndarray] | Iterable = ()):
        self.m = int(m)
        self.shape = tuple(int(n) for n in np.atleast_1d(shape)) if shape != () else ()
        self.terms: dict[tuple, np.ndarray] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for exps, coef in items:
            exps = tuple(int(e) for e in exps)
            if len(exps) != self.m:
                raise ValueError(f"exponent {exps} does not match base dimension {self.m}")
            coef = np.asarray(coef, dtype=float).reshape(self.shape)
            if exps in self.terms:
                self.terms[exps] = self.terms[exps] + coef
            else:
                self.terms[exps] = coef.copy()

    @classmethod
    def zero(cls, m: int, shape) -> "Polynomial":
        return cls(m, shape)

    @classmethod
    def constant(cls, m: int, value) -> "Polynomial":
        value = np.asarray(value, dtype=float)
        return cls(m, value.shape, {(0,) * m: value})

    @classmethod
    def coordinate(cls, m: int, i: int) -> "Polynomial":
        e = [0] * m
        e[i] = 1
        return cls(m, (), {tuple(e): 1.0})

    def _packed(self):
        if getattr(self, "_pack", None) is None:
            n = int(np.prod(self.shape, dtype=int))
            if self.terms:
                E = np.array(list(self.terms), dtype=float).reshape(len(self.terms), self.m)
                C = np.array([c.reshape(n) for c in self.terms.values()])
            else:
                E, C = np.zeros((0, self.m)), np.zeros((0, n))
            self._pack = (E, C)
        return self._pack

    def __call__(self, x) -> np.ndarray:
        """Evaluate at ``x`` of shape ``(..., m)``; returns ``(...,) + shape``."""
        x = np.asarray(x, dtype=float)
        E, C = self._packed()
        mono = np.prod(x[..., None, :] ** E, axis=-1)
        return (mono @ C).reshape(x.shape[:-1] + self.shape)

    def partial(self, i: int) -> "Polynomial":
        terms = []
        for exps, coef in self.terms.items():
            if exps[i] == 0:
                continue
            e = list(exps)
            e[i] -= 1
            terms.append((tuple(e), coef * exps[i]))
        return Polynomial(self.m, self.shape, terms)

    def jacobian(self, x) -> np.ndarray:
        """Array of shape ``shape + (m,)`` holding ``d p / d x_i`` in the last slot."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(self.shape + (self.m,))
        for exps, coef in self.terms.items():
            e = np.array(exps)
            for i in range(self.m):
                if e[i] == 0:
                    continue
                ei = e.copy()
                ei[i] -= 1
                out[..., i] += coef * e[i] * float(np.prod(x ** ei))
        return out

    def __add__(self, other: "Polynomial") -> "Polynomial":
        if other.m != self.m or other.shape != self.shape:
            raise ValueError("polynomial shapes differ")
        return Polynomial(self.m, self.shape, list(self.terms.items()) + list(other.terms.items()))

    def __neg__(self) -> "Polynomial":
        return Polynomial(self.m, self.shape, [(e, -c) for e, c in self.terms.items()])

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def scale(self, a: float) -> "Polynomial":
        return Polynomial(self.m, self.shape, [(e, a * c) for e, c in self.terms.items()])

    def component(self, idx) -> "Polynomial":
        return Polynomial(self.m, np.zeros(self.shape)[idx].shape,
                          [(e, c[idx]) for e, c in self.terms.items()])

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(np.max(np.abs(c)) <= tol for c in self.terms.values()) if self.terms else True

    def to_json(self) -> list:
        return [{"exp": list(e), "coef": np.asarray(c).tolist()} for e, c in sorted(self.terms.items())]

    @classmethod
    def from_json(cls, m: int, shape, data) -> "Polynomial":
        return cls(m, shape, [(tuple(t["exp"]), t["coef"]) for t in data])

    def __repr__(self):
        return f"Polynomial(m={self.m}, shape={self.shape}, terms={len(self.terms)})"


def bilinear(p: Polynomial, q: Polynomial, product: Callable[[np.ndarray, np.ndarray], np.ndarray],
             shape) -> Polynomial:
    """Polynomial ``x -> product(p(x), q(x))`` for a bilinear ``product``."""
    terms = []
    for e1, c1 in p.terms.items():
        for e2, c2 in q.terms.items():
            terms.append((tuple(a + b for a, b in zip(e1, e2)), product(c1, c2)))
    return Polynomial(p.m, shape, terms)


def random_polynomial(rng: np.random.Generator, m: int, shape, degree: int, scale: float = 1.0) -> Polynomial:
    """All monomials up to ``degree`` with independent normal coefficients."""
    import itertools

    terms = []
    for exps in itertools.product(range(degree + 1), repeat=m):
        if sum(exps) <= degree:
            terms.append((exps, scale * rng.normal(size=shape)))
    return Polynomial(m, shape, terms)
