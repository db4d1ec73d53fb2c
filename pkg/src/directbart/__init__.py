"""Treatment effect estimation at a sharp cutoff with a sum-of-trees prior
placed directly on the effect function, plus conjugate local polynomial
nuisance updates, score-based bandwidth selection, and a simulation harness.
"""

__version__ = "0.1.0"

from .bandwidth import ScoreReport, candidate_grid, hyvarinen_score, select_bandwidth
from .bart import (
    ForestState,
    LeafHyper,
    LeafStats,
    elicit_leaf_prior,
    forest_cate,
    leaf_log_marginal,
    mh_tree_update,
    sample_leaf_means,
)
from .data import (
    ColumnSpec,
    Dataset,
    DesignRow,
    Schema,
    StackedDesign,
    build_design,
    kernel_weights,
    load_dataset,
    near_cutoff_units,
    polynomial_basis,
)
from .dgp import (
    Scenario1Spec,
    Scenario2Spec,
    SimulatedData,
    calibrate_scenario1,
    calibrate_scenario2,
    generate_scenario1,
    generate_scenario2,
)
from .errors import ConfigurationError, DataError, NumericError, ParseError, SchemaError
from .evaluate import LpFit, MetricsTable, coverage, lp_fit, rmse, run_experiment
from .gibbs import (
    CateSummary,
    PosteriorDraws,
    SamplerConfig,
    gibbs_step,
    initialize_state,
    run_chain,
    summarize,
)
from .locallinear import LocalLinearPrior, LocalLinearState, sample_B, sample_omega
from .trees import Proposal, SplitData, SplitRule, Tree, log_tree_prior, propose_move

__all__ = [
    "__version__",
    "ColumnSpec", "Dataset", "DesignRow", "Schema", "StackedDesign",
    "build_design", "kernel_weights", "load_dataset", "near_cutoff_units",
    "polynomial_basis",
    "Proposal", "SplitData", "SplitRule", "Tree", "log_tree_prior", "propose_move",
    "ForestState", "LeafHyper", "LeafStats", "elicit_leaf_prior", "forest_cate",
    "leaf_log_marginal", "mh_tree_update", "sample_leaf_means",
    "LocalLinearPrior", "LocalLinearState", "sample_B", "sample_omega",
    "CateSummary", "PosteriorDraws", "SamplerConfig", "gibbs_step",
    "initialize_state", "run_chain", "summarize",
    "ScoreReport", "candidate_grid", "hyvarinen_score", "select_bandwidth",
    "Scenario1Spec", "Scenario2Spec", "SimulatedData", "calibrate_scenario1",
    "calibrate_scenario2", "generate_scenario1", "generate_scenario2",
    "LpFit", "MetricsTable", "coverage", "lp_fit", "rmse", "run_experiment",
    "ConfigurationError", "DataError", "NumericError", "ParseError", "SchemaError",
]
