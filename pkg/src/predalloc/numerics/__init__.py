"""Special functions, root finding and the barrier solver shared by the rest of the package."""

from .convex import (
    ConcaveConstraint,
    ConstraintBlock,
    ConvexProgram,
    LinearBlock,
    SolverOptions,
    SolverResult,
    Status,
    minimize_convex,
)
from .roots import BracketedFunction, BracketError, check_gradient, find_root
from .special import DomainError, exp_integral_e1, log_upper_incomplete_gamma, upper_incomplete_gamma

__all__ = [
    "BracketError",
    "BracketedFunction",
    "ConcaveConstraint",
    "ConstraintBlock",
    "ConvexProgram",
    "DomainError",
    "LinearBlock",
    "SolverOptions",
    "SolverResult",
    "Status",
    "check_gradient",
    "exp_integral_e1",
    "find_root",
    "log_upper_incomplete_gamma",
    "minimize_convex",
    "upper_incomplete_gamma",
]
