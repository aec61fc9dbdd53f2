"""Matching-based accuracy assessment for heterogeneous treatment effect
estimators: proximity-score distances, average-distance optimal matching,
match-then-split cross-validation, and a desk-scale simulation study."""

__version__ = "0.1.0"

from .datamodel import (
    Dataset,
    Match,
    MatchSpec,
    Truth,
    load_dataset,
    save_dataset,
    split_by_treatment,
)
from .distances import (
    DistanceMatrix,
    mahalanobis_matrix,
    proximity_matrix,
    semi_oracle_matrix,
)
from .flowmatch import (
    InfeasibleMatchError,
    MatchSolution,
    brute_force_match,
    mcf_exact_pairs,
    min_avg_match,
    min_total_match,
)
from .forest import ForestParams, RegressionForest, fit_forest, leaf_assignments
from .prune import prune, removable_edges
from .assess import (
    MethodConfig,
    NoiseSpec,
    conditional_nll,
    cross_validate,
    holdout_assess,
    make_folds,
    pair_diagnostics,
    prop1_bounds,
    validation_error,
)
from .estimator import DEFAULT_LAMBDAS, LassoPath, fit_joint_lasso
from .harness import (
    ExperimentConfig,
    curve_regression,
    oracle_mse,
    relative_mse,
    run_experiment,
)
from .synthgen import (
    SETTINGS,
    ScenarioConfig,
    generate_from_features,
    generate_scenario,
    propensity,
    scenario_config,
)
