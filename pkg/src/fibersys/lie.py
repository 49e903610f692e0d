"""Lie algebras by structure constants, matrix groups and their fiber actions.

Convention used throughout the package: a matrix group acts on the fiber
from the right by ``r(s, g) = g^{-1} . s`` (homogeneous coordinates for
affine groups).  The fundamental field of ``v`` is then
``eta(v)(s) = -M(v) . s``, which makes ``eta`` a Lie algebra homomorphism
for the bracket ``[X, Y] = DY.X - DX.Y`` and the structure constants of the
generator matrices.  Bundle transition functions use the associated left
action ``g . s``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from .errors import (BasisProjectionError, DimensionMismatch, EscapeDetected,
                     LogBranchError, ValidationError)
from .geometry import BLOWUP_BOUND, VectorField, affine_field

JACOBI_TOL = 1e-12
AD_TOL = 1e-8
PROJECT_EVERY = 32


class LieAlgebra:
    """Real Lie algebra with ``[e_i, e_j] = sum_k c[i, j, k] e_k``."""

    def __init__(self, structure, validate: bool = True):
        c = np.array(structure, dtype=float)
        if c.ndim != 3 or c.shape[0] != c.shape[1] or c.shape[1] != c.shape[2]:
            raise ValidationError("structure", f"structure constants must be d x d x d, got {c.shape}")
        self.c = c
        self.c.setflags(write=False)
        self.dim = c.shape[0]
        if validate:
            self.validate()

    @classmethod
    def abelian(cls, d: int) -> "LieAlgebra":
        return cls(np.zeros((d, d, d)))

    @classmethod
    def from_matrices(cls, mats, tol: float = 1e-9) -> "LieAlgebra":
        """Structure constants of the span of ``mats`` under the matrix commutator."""
        mats = np.asarray(mats, dtype=float)
        d = len(mats)
        basis = mats.reshape(d, -1).T
        c = np.zeros((d, d, d))
        for i in range(d):
            for j in range(d):
                comm = mats[i] @ mats[j] - mats[j] @ mats[i]
                coef, *_ = np.linalg.lstsq(basis, comm.ravel(), rcond=None)
                res = np.linalg.norm(basis @ coef - comm.ravel())
                if res > tol * max(1.0, np.linalg.norm(comm)):
                    raise ValidationError("closure", f"generators not closed under commutator ({res:.2e})")
                c[i, j] = coef
        c[np.abs(c) < 1e-14] = 0.0
        return cls(c)

    def antisymmetry_residual(self) -> float:
        return float(np.max(np.abs(self.c + self.c.transpose(1, 0, 2)))) if self.dim else 0.0

    def jacobi_residual(self) -> float:
        # [[e_i,e_j],e_k] + cyclic, as coefficient arrays
        if self.dim == 0:
            return 0.0
        t = np.einsum("ijm,mkn->ijkn", self.c, self.c)
        total = t + t.transpose(1, 2, 0, 3) + t.transpose(2, 0, 1, 3)
        return float(np.max(np.abs(total)))

    def validate(self, tol: float = JACOBI_TOL):
        if self.antisymmetry_residual() > tol:
            raise ValidationError("antisymmetry", f"residual {self.antisymmetry_residual():.3e}")
        if self.jacobi_residual() > tol:
            raise ValidationError("jacobi", f"residual {self.jacobi_residual():.3e}")

    def bracket(self, v, w) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        w = np.asarray(w, dtype=float)
        if v.shape[-1] != self.dim or w.shape[-1] != self.dim:
            raise DimensionMismatch(f"expected vectors of dimension {self.dim}")
        return np.einsum("i,j,ijk->k", v, w, self.c)

    def basis(self) -> np.ndarray:
        return np.eye(self.dim)

    def __repr__(self):
        return f"LieAlgebra(dim={self.dim})"


def bracket_V(algebra: LieAlgebra, v, w) -> np.ndarray:
    return algebra.bracket(v, w)


# ---------------------------------------------------------------------------
# matrix groups

GROUP_KINDS = ("rotation", "affine", "affine-rotation", "general")


class MatrixGroup:
    """A matrix Lie group given by generator matrices of its Lie algebra.

    ``kind`` selects the manifold projection applied during integration:
    ``rotation`` (SO(k)), ``affine`` (last row fixed), ``affine-rotation``
    (rigid motions), ``general`` (none).
    """

    def __init__(self, kind: str, generators, algebra: Optional[LieAlgebra] = None):
        if kind not in GROUP_KINDS:
            raise ValidationError("group-kind", f"unknown group kind {kind!r}")
        gens = np.array(generators, dtype=float)
        if gens.ndim == 2:
            gens = gens[None]
        self.kind = kind
        self.generators = gens
        self.generators.setflags(write=False)
        self.size = gens.shape[1]
        self.affine = kind.startswith("affine")
        self.fiber_dim = self.size - 1 if self.affine else self.size
        derived = LieAlgebra.from_matrices(gens)
        if algebra is not None:
            if algebra.dim != derived.dim or np.max(np.abs(algebra.c - derived.c)) > 1e-9:
                raise ValidationError("structure-constants", "declared structure constants disagree with the generators")
        self.algebra = algebra if algebra is not None else derived

    @property
    def dim(self) -> int:
        return len(self.generators)

    def identity(self) -> np.ndarray:
        return np.eye(self.size)

    def matrix(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise DimensionMismatch(f"expected algebra vector of dimension {self.dim}")
        n = self.size
        return (v @ self.generators.reshape(self.dim, n * n)).reshape(v.shape[:-1] + (n, n))

    def coefficients(self, X) -> tuple[np.ndarray, float]:
        """Least-squares coordinates of matrix ``X`` in the generator basis."""
        basis = self.generators.reshape(self.dim, -1).T
        x = np.asarray(X, dtype=float).ravel()
        coef, *_ = np.linalg.lstsq(basis, x, rcond=None)
        return coef, float(np.linalg.norm(basis @ coef - x))

    def membership_residual(self, g) -> float:
        g = np.asarray(g, dtype=float)
        res = 0.0
        if self.affine:
            bottom = np.zeros(self.size)
            bottom[-1] = 1.0
            res = max(res, float(np.max(np.abs(g[-1] - bottom))))
        if self.kind in ("rotation", "affine-rotation"):
            L = g[: self.fiber_dim, : self.fiber_dim]
            res = max(res, float(np.linalg.norm(L.T @ L - np.eye(self.fiber_dim))))
            res = max(res, abs(float(np.linalg.det(L)) - 1.0))
        return res

    def project(self, g) -> np.ndarray:
        g = np.array(g, dtype=float)
        if self.kind in ("rotation", "affine-rotation"):
            k = self.fiber_dim
            U, _, Vt = np.linalg.svd(g[:k, :k])
            R = U @ Vt
            if np.linalg.det(R) < 0:
                U[:, -1] *= -1
                R = U @ Vt
            g[:k, :k] = R
        if self.affine:
            g[-1, :] = 0.0
            g[-1, -1] = 1.0
        return g

    def homogeneous(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if not self.affine:
            return s
        ones = np.ones(s.shape[:-1] + (1,))
        return np.concatenate([s, ones], axis=-1)

    def act_left(self, g, s) -> np.ndarray:
        """``g . s``; used for bundle transition functions."""
        out = self.homogeneous(s) @ np.asarray(g).T
        return out[..., : self.fiber_dim]

    def act_right(self, s, g) -> np.ndarray:
        """``r(s, g) = g^{-1} . s``."""
        return self.act_left(np.linalg.inv(g), s)

    def representation(self) -> "Representation":
        k = self.fiber_dim
        A = -self.generators[:, :k, :k]
        b = -self.generators[:, :k, k] if self.affine else np.zeros((self.dim, k))
        return Representation(self.algebra, A, b, group=self)

    def __repr__(self):
        return f"MatrixGroup({self.kind}, dim={self.dim}, size={self.size})"


def so3_generators() -> np.ndarray:
    """``L_i`` with ``L_i x = e_i x x``; ``[L_1, L_2] = L_3``."""
    L = np.zeros((3, 3, 3))
    eps = np.zeros((3, 3, 3))
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
    for i in range(3):
        L[i] = -eps[i]
    return L


ROTATION_2D = np.array([[0.0, -1.0], [1.0, 0.0]])


# ---------------------------------------------------------------------------
# representations


class Representation:
    """Affine realisation of V by fiber vector fields ``s -> A(v) s + b(v)``."""

    def __init__(self, algebra: LieAlgebra, A, b=None, group: Optional[MatrixGroup] = None):
        A = np.array(A, dtype=float)
        if A.ndim != 3 or A.shape[0] != algebra.dim or A.shape[1] != A.shape[2]:
            raise DimensionMismatch("representation matrices must have shape (d, k, k)")
        self.algebra = algebra
        self.A = A
        self.fiber_dim = A.shape[1]
        self.b = np.zeros(A.shape[:2]) if b is None else np.array(b, dtype=float)
        self.A.setflags(write=False)
        self.b.setflags(write=False)
        self._A_flat = self.A.reshape(algebra.dim, -1)
        self.group = group

    @classmethod
    def trivial(cls, algebra: LieAlgebra, fiber_dim: int) -> "Representation":
        d = algebra.dim
        return cls(algebra, np.zeros((d, fiber_dim, fiber_dim)), np.zeros((d, fiber_dim)))

    def matrices(self, v) -> tuple[np.ndarray, np.ndarray]:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.algebra.dim:
            raise DimensionMismatch(f"expected algebra vector of dimension {self.algebra.dim}")
        k = self.fiber_dim
        return (v @ self._A_flat).reshape(v.shape[:-1] + (k, k)), v @ self.b

    def eval(self, v, s) -> np.ndarray:
        """``eta(v)(s)``; vectorised over the leading axes of ``s``."""
        Av, bv = self.matrices(v)
        return np.asarray(s) @ Av.T + bv

    def field(self, v) -> VectorField:
        Av, bv = self.matrices(v)
        return affine_field(Av, bv)

    def basis_values(self, s) -> np.ndarray:
        """Matrix whose column ``i`` is ``eta(e_i)(s)``."""
        s = np.asarray(s, dtype=float)
        return (np.einsum("ikl,l->ik", self.A, s) + self.b).T

    def homomorphism_residual(self, points) -> float:
        """Max over basis pairs and points of ``|[eta e_i, eta e_j] - eta[e_i, e_j]|``."""
        from .geometry import lie_bracket

        d = self.algebra.dim
        worst = 0.0
        for i in range(d):
            for j in range(i + 1, d):
                Xi = self.field(np.eye(d)[i])
                Xj = self.field(np.eye(d)[j])
                target = self.field(self.algebra.bracket(np.eye(d)[i], np.eye(d)[j]))
                for p in np.atleast_2d(points):
                    r = lie_bracket(Xi, Xj, p) - target(p)
                    worst = max(worst, float(np.linalg.norm(r)))
        return worst


def fundamental_field(rep: Representation, v) -> VectorField:
    return rep.field(v)


# ---------------------------------------------------------------------------
# exponential, logarithm, adjoint


def exp(X) -> np.ndarray:
    """Matrix exponential (scaling and squaring with a Pade core)."""
    return scipy.linalg.expm(np.asarray(X, dtype=float))


def log(g, max_dist: float = 1.0) -> np.ndarray:
    """Principal matrix logarithm; refuses elements with ``|g - I| >= max_dist``."""
    g = np.asarray(g, dtype=float)
    dist = float(np.linalg.norm(g - np.eye(len(g)), 2))
    if dist >= max_dist:
        raise LogBranchError(f"|g - I| = {dist:.3f} >= {max_dist}; shrink the loop")
    L = scipy.linalg.logm(g)
    return np.real(L)


def Ad(group: MatrixGroup, g, v, tol: float = AD_TOL) -> np.ndarray:
    """``g M(v) g^{-1}`` re-expressed in the algebra basis."""
    v_new, _ = Ad_with_residual(group, g, v, tol)
    return v_new


def Ad_with_residual(group: MatrixGroup, g, v, tol: float = AD_TOL) -> tuple[np.ndarray, float]:
    g = np.asarray(g, dtype=float)
    conj = g @ group.matrix(v) @ np.linalg.inv(g)
    coef, res = group.coefficients(conj)
    scale = max(1.0, float(np.linalg.norm(conj)))
    if res > tol * scale:
        raise BasisProjectionError(res, tol, "Ad")
    return coef, res


# ---------------------------------------------------------------------------
# left-invariant ODE


@dataclass
class GroupPath:
    times: np.ndarray
    elements: np.ndarray

    @property
    def end(self) -> np.ndarray:
        return self.elements[-1]


def integrate_left_invariant(group: MatrixGroup, xi: Callable[[float], np.ndarray], t1: float,
                             steps: int, t0: float = 0.0, g0=None,
                             blowup: float = BLOWUP_BOUND) -> GroupPath:
    """Solve ``g' = g M(xi(t))`` with RK4, projecting back onto the group periodically."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    g = group.identity() if g0 is None else np.array(g0, dtype=float)
    h = (t1 - t0) / steps
    n = group.size
    flat = group.generators.reshape(group.dim, n * n)

    def rhs(t, g):
        return g @ (np.asarray(xi(t)) @ flat).reshape(n, n)

    out = [g]
    for i in range(steps):
        t = t0 + i * h
        k1 = rhs(t, g)
        k2 = rhs(t + 0.5 * h, g + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, g + 0.5 * h * k2)
        k4 = rhs(t + h, g + h * k3)
        g = g + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if (i + 1) % PROJECT_EVERY == 0 or i + 1 == steps:
            g = group.project(g)
        if not np.all(np.isfinite(g)) or np.max(np.abs(g)) > blowup:
            raise EscapeDetected(t, g, "blowup")
        out.append(g)
    return GroupPath(t0 + h * np.arange(steps + 1), np.array(out))
