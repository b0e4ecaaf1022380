"""Numerical engine for backward equations driven by Brownian noise and a
single compensated default jump.

Layers, bottom up: scenario simulation (paths and trees), driver definitions,
exponential reweighting, backward solvers with theorem-level checks, and a
derivative-pricing surface with hedging and a pricing-axiom suite.
"""

from .adjoint import (
    AdjointPath,
    MartingaleCheck,
    ReweightEstimate,
    check_martingale,
    doleans_dade,
    girsanov_reweight,
    terminal_adjoint,
)
from .contracts import (
    ClaimSpec,
    DividendProcess,
    TerminalState,
    add_dividends,
    call_claim,
    claim_from_function,
    combine_claims,
    constant_claim,
    default_digital_claim,
    expression_claim,
    no_dividends,
    put_claim,
    scale_dividends,
)
from .drivers import (
    AdmissibilityReport,
    DriverSpec,
    custom_driver,
    evaluate,
    expression_driver,
    lambda_linear,
    large_investor_driver,
    perfect_market_driver,
    verify_admissibility,
    zero_driver,
)
from .exceptions import (
    ConfigurationError,
    EngineError,
    PicardConvergenceError,
    RegressionError,
    UnsupportedModelError,
    ValidationError,
)
from .market import (
    AssetPaths,
    MarketModel,
    asset_terminals,
    pricing_driver,
    savings_account,
    simulate_assets,
    tree_assets,
)
from .pricing import (
    HedgeStrategy,
    MonteCarloPlan,
    PricingReport,
    ReplicationStats,
    TreeHedgePolicy,
    hedge_from_solution,
    perfect_market_price,
    price_nonlinear,
    replicate,
    risk_measure,
    tree_hedge_on_grid,
)
from .properties import AXIOMS, AxiomResult, run_axiom_suite, suite_verdict
from .scenarios import (
    IntensityModel,
    ResidualStats,
    ScenarioPath,
    ScenarioSet,
    TimeGrid,
    build_grid,
    compensator_residual,
    iter_path_batches,
    simulate_paths,
)
from .solver import (
    BasisSpec,
    BsdeSolution,
    ComparisonReport,
    EstimateCertificate,
    PicardDiagnostic,
    RegressionPolicy,
    apriori_check,
    comparison_check,
    picard_diagnostic,
    representation_monte_carlo,
    solve_linear_representation,
    solve_lsmc,
    solve_tree,
    strict_comparison_check,
)
from .tree import MAX_TREE_STEPS, ScenarioTree, build_tree

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "AXIOMS",
    "AdjointPath",
    "AdmissibilityReport",
    "AssetPaths",
    "AxiomResult",
    "BasisSpec",
    "BsdeSolution",
    "ClaimSpec",
    "ComparisonReport",
    "ConfigurationError",
    "DividendProcess",
    "DriverSpec",
    "EngineError",
    "EstimateCertificate",
    "HedgeStrategy",
    "IntensityModel",
    "MAX_TREE_STEPS",
    "MarketModel",
    "MartingaleCheck",
    "MonteCarloPlan",
    "PicardConvergenceError",
    "PicardDiagnostic",
    "PricingReport",
    "RegressionError",
    "RegressionPolicy",
    "ReplicationStats",
    "ResidualStats",
    "ReweightEstimate",
    "ScenarioPath",
    "ScenarioSet",
    "ScenarioTree",
    "TerminalState",
    "TimeGrid",
    "TreeHedgePolicy",
    "UnsupportedModelError",
    "ValidationError",
    "add_dividends",
    "apriori_check",
    "asset_terminals",
    "build_grid",
    "build_tree",
    "call_claim",
    "check_martingale",
    "claim_from_function",
    "combine_claims",
    "comparison_check",
    "compensator_residual",
    "constant_claim",
    "custom_driver",
    "default_digital_claim",
    "doleans_dade",
    "evaluate",
    "expression_claim",
    "expression_driver",
    "girsanov_reweight",
    "hedge_from_solution",
    "iter_path_batches",
    "lambda_linear",
    "large_investor_driver",
    "no_dividends",
    "perfect_market_driver",
    "perfect_market_price",
    "picard_diagnostic",
    "price_nonlinear",
    "pricing_driver",
    "put_claim",
    "replicate",
    "representation_monte_carlo",
    "risk_measure",
    "run_axiom_suite",
    "savings_account",
    "scale_dividends",
    "simulate_assets",
    "simulate_paths",
    "solve_linear_representation",
    "solve_lsmc",
    "solve_tree",
    "strict_comparison_check",
    "suite_verdict",
    "terminal_adjoint",
    "tree_assets",
    "tree_hedge_on_grid",
    "verify_admissibility",
    "zero_driver",
]
