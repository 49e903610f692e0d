"""Exception types shared across the package."""

from __future__ import annotations


class FibersysError(Exception):
    """Base class for all package errors."""


class EscapeDetected(FibersysError):
    """A trajectory left its domain or exceeded the blow-up bound.

    This is a verdict about the vector field (its flow is not complete),
    not an implementation failure.
    """

    def __init__(self, t_esc: float, point=None, reason: str = "domain"):
        self.t_esc = float(t_esc)
        self.point = point
        self.reason = reason
        super().__init__(f"escape ({reason}) at t={self.t_esc:.6g}")


class DomainError(FibersysError):
    pass


class DimensionMismatch(FibersysError, ValueError):
    pass


class ChartMismatch(FibersysError):
    pass


class BasisProjectionError(FibersysError):
    """A vector field or matrix is not in the span of the given basis."""

    def __init__(self, residual: float, tol: float, what: str = ""):
        self.residual = float(residual)
        self.tol = float(tol)
        msg = f"basis projection residual {self.residual:.3e} exceeds {self.tol:.1e}"
        if what:
            msg = f"{what}: {msg}"
        super().__init__(msg)


class CocycleViolation(FibersysError):
    def __init__(self, residual: float, where=None):
        self.residual = float(residual)
        self.where = where
        super().__init__(f"cocycle residual {self.residual:.3e} at {where}")


class EmptyFiber(FibersysError):
    pass


class LogBranchError(FibersysError):
    pass


class FiberedProductViolation(FibersysError):
    pass


class ValidationError(FibersysError):
    """A scenario failed validation; ``invariant`` names what was violated."""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        super().__init__(f"{invariant}: {detail}" if detail else invariant)


class ParseError(FibersysError):
    def __init__(self, location: str, detail: str):
        self.location = location
        super().__init__(f"{location}: {detail}")
