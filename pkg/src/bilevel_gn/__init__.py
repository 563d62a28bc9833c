"""Gauss-Newton type solvers for bilevel programs via the value-function reformulation."""

from .jacobian import (
    DegeneratePairError,
    FBCoefficients,
    LagrangianBlocks,
    assemble_jacobian,
    complementarity_coefficients,
    fb_coefficients,
    lagrangian_blocks,
    limiting_jacobian,
)
from .linalg import (
    SingularMatrixError,
    SingularNormalMatrixError,
    SvdConvergenceError,
    SvdFactors,
    lm_step,
    normal_equations_step,
    pinv,
    pseudo_step,
    solve_gaussian,
    svd,
)
from .problem import BilevelProblem, DerivativeBundle, DimensionError, KnownSolution, derivatives, evaluate, finite_difference_check
from .problems import UnknownProblemError, get_problem, problem_names
from .residual import IterateZ, fb, fb_smoothed, merit, residual, residual_smoothed
from .solver import MuPolicy, SolveReport, SolverConfig, Termination, initialize, mu_next, solve

__version__ = "0.1.0"

__all__ = [
    "BilevelProblem", "DerivativeBundle", "DimensionError", "KnownSolution",
    "derivatives", "evaluate", "finite_difference_check",
    "UnknownProblemError", "get_problem", "problem_names",
    "IterateZ", "fb", "fb_smoothed", "merit", "residual", "residual_smoothed",
    "DegeneratePairError", "FBCoefficients", "LagrangianBlocks", "assemble_jacobian",
    "complementarity_coefficients", "fb_coefficients", "lagrangian_blocks", "limiting_jacobian",
    "SingularMatrixError", "SingularNormalMatrixError", "SvdConvergenceError", "SvdFactors",
    "lm_step", "normal_equations_step", "pinv", "pseudo_step", "solve_gaussian", "svd",
    "MuPolicy", "SolveReport", "SolverConfig", "Termination", "initialize", "mu_next", "solve",
]
