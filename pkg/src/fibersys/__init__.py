"""Systems of connections on fiber bundles: transport, curvature, holonomy and reconstruction."""

from .checks import Report, run_check_suite
from .connection import (Splitting, curvature_bracket, curvature_formula, holonomy_loop, transport_direct,
                         transport_group)
from .errors import (BasisProjectionError, ChartMismatch, CocycleViolation, DimensionMismatch, DomainError,
                     EmptyFiber, EscapeDetected, FiberedProductViolation, FibersysError, LogBranchError,
                     ParseError, ValidationError)
from .lie import LieAlgebra, MatrixGroup, Representation
from .scenarios import BUILTINS, Scenario, load_scenario
from .system import SystemSpec

__version__ = "0.1.0"

__all__ = [
    "BUILTINS", "BasisProjectionError", "ChartMismatch", "CocycleViolation", "DimensionMismatch", "DomainError",
    "EmptyFiber", "EscapeDetected", "FiberedProductViolation", "FibersysError", "LieAlgebra", "LogBranchError",
    "MatrixGroup", "ParseError", "Report", "Representation", "Scenario", "Splitting", "SystemSpec",
    "ValidationError", "curvature_bracket", "curvature_formula", "holonomy_loop", "load_scenario",
    "run_check_suite", "transport_direct", "transport_group",
]
