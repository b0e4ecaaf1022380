"""Backward solvers and their certificates."""

from .checks import (
    CheckItem,
    ComparisonReport,
    EstimateCertificate,
    PicardDiagnostic,
    apriori_check,
    comparison_check,
    picard_diagnostic,
    strict_comparison_check,
)
from .lsmc import BasisSpec, RegressionPolicy, solve_lsmc
from .representation import (
    RepresentationResult,
    representation_monte_carlo,
    representation_values,
    solve_linear_representation,
)
from .results import BsdeSolution, SolverDiagnostics
from .tree_backward import level_moments, solve_tree, terminal_values, tree_terminal_state

__all__ = [
    "BasisSpec",
    "BsdeSolution",
    "CheckItem",
    "ComparisonReport",
    "EstimateCertificate",
    "PicardDiagnostic",
    "RegressionPolicy",
    "RepresentationResult",
    "SolverDiagnostics",
    "apriori_check",
    "comparison_check",
    "level_moments",
    "picard_diagnostic",
    "representation_monte_carlo",
    "representation_values",
    "solve_linear_representation",
    "solve_lsmc",
    "solve_tree",
    "strict_comparison_check",
    "terminal_values",
    "tree_terminal_state",
]
