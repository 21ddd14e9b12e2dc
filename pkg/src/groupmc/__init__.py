"""Group-specific 1-bit matrix completion with cluster developing.

Fits low-rank logistic factor models with per-group bias rows to binary
rating matrices (GS1MC), and can discover the groups themselves by sparse
subspace clustering of the fitted rating likelihoods (CDMC).
"""

from .cdmc import CdmcConfig, CdmcTrace, cross_run_ami, fit_cdmc
from .clustering import (
    AffinityGraph,
    ClusterLabels,
    SelfExpression,
    build_affinity,
    kmeans,
    solve_self_expression,
    spectral_cluster,
)
from .datasets import (
    RatingRecord,
    SyntheticConfig,
    SyntheticData,
    binarize_ratings,
    generate_synthetic,
    group_by_implicit_feedback,
    load_movielens,
    split_observed,
)
from .errors import DataError, GroupmcError, NumericalError, UsageError
from .metrics import (
    ContingencyTable,
    accuracy,
    adjusted_mutual_information,
    expected_mutual_information,
    relative_error,
)
from .model import (
    BinaryRatings,
    FactorSet,
    GroupAssignment,
    assemble_m,
    binarize_predictions,
    expand_group_factors,
    predict_probabilities,
    sigmoid,
)
from .objective import (
    GradientSet,
    ObservationMasks,
    grad_all,
    grad_m,
    loss_f,
    loss_l,
    masks_from_observations,
)
from .training import FitResult, TrainConfig, fit_gs1mc, predict_missing

__version__ = "0.1.0"

__all__ = [
    "AffinityGraph",
    "BinaryRatings",
    "CdmcConfig",
    "CdmcTrace",
    "ClusterLabels",
    "ContingencyTable",
    "DataError",
    "FactorSet",
    "FitResult",
    "GradientSet",
    "GroupAssignment",
    "GroupmcError",
    "NumericalError",
    "ObservationMasks",
    "RatingRecord",
    "SelfExpression",
    "SyntheticConfig",
    "SyntheticData",
    "TrainConfig",
    "UsageError",
    "accuracy",
    "adjusted_mutual_information",
    "assemble_m",
    "binarize_predictions",
    "binarize_ratings",
    "build_affinity",
    "cross_run_ami",
    "expand_group_factors",
    "expected_mutual_information",
    "fit_cdmc",
    "fit_gs1mc",
    "generate_synthetic",
    "grad_all",
    "grad_m",
    "group_by_implicit_feedback",
    "kmeans",
    "load_movielens",
    "loss_f",
    "loss_l",
    "masks_from_observations",
    "predict_missing",
    "predict_probabilities",
    "relative_error",
    "sigmoid",
    "solve_self_expression",
    "spectral_cluster",
    "split_observed",
]
