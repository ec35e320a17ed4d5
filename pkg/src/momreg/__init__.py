"""Median-of-means minmax estimators for robust sparse linear regression."""
from .blocks import BlockPartition, BlockPolicy, partition_fixed, partition_random
from .dataset import Dataset, GenSpec, GroundTruth, ell2_error, generate, make_sparse_target
from .exceptions import NumericError, ParameterError
from .mom import median_block, mom, quantile
from .outlier_detect import DepthScores, depth_scores, flag_outliers, merge_scores
from .regularizers import Penalty, prox_l1, prox_slope
from .solvers import Estimate, IterTrace, SolverConfig, duality_gap, fit, fit_many
from .tuning import CvSpec, CvResult, breakdown_probe, minimax_rate, mom_cv, recommended_lambda

__all__ = [
    "BlockPartition", "BlockPolicy", "partition_fixed", "partition_random",
    "Dataset", "GenSpec", "GroundTruth", "ell2_error", "generate", "make_sparse_target",
    "NumericError", "ParameterError",
    "median_block", "mom", "quantile",
    "DepthScores", "depth_scores", "flag_outliers", "merge_scores",
    "Penalty", "prox_l1", "prox_slope",
    "Estimate", "IterTrace", "SolverConfig", "duality_gap", "fit", "fit_many",
    "CvSpec", "CvResult", "breakdown_probe", "minimax_rate", "mom_cv", "recommended_lambda",
]
