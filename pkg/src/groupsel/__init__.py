"""Two-stage group variable selection.

Stage 1 discovers a group structure from the data (distance-correlation
screening for wide problems, then hierarchical variable clustering with a
bootstrap-stability choice of the cluster count); stage 2 fits group-penalized
regression or classification models over the discovered groups.
"""

__version__ = "0.1.0"

from .data import (
    Coefficients,
    Dataset,
    Partition,
    StandardizedMatrix,
    Variable,
    expand_groups,
    load_csv,
    save_csv,
    standardize,
)
from .penalties import PenaltySpec, penalty_derivative, penalty_value, scalar_threshold
from .solvers import (
    CvResult,
    FitResult,
    GroupPenaltySpec,
    cross_validate,
    default_lambda_grid,
    fit_group,
    fit_individual,
    fit_sparse_group,
    kkt_residual,
    lambda_max,
    predict,
)
from .clustering import (
    Dendrogram,
    PcamixResult,
    StabilityCurve,
    adjusted_rand_index,
    cut_tree,
    dissimilarity,
    hierarchical_cluster,
    homogeneity,
    pcamix,
    rand_index,
    stability_select,
)
from .screening import ScreeningResult, distance_correlation, distance_covariance, pearson, screen
from .metrics import (
    SelectionTruth,
    SmoteConfig,
    classification_metrics,
    rmse,
    selection_metrics,
    smote,
)
from .simulation import SimDesign, SimInstance, generate, run_experiment, sim_design
from .two_stage import (
    TwoStageConfig,
    TwoStageReport,
    random_equal_partition,
    run_two_stage,
)
