"""Graph structure learning for binary responses with covariates.

Fits the multivariate Bernoulli model with a hierarchical overlapping
group-lasso penalty and tunes the penalty by GACV / BGACV.
"""

__version__ = "0.1.0"

from .data import Dataset, Standardizer
from .mvb import (
    ModelConfig,
    augment_response,
    covariance_w,
    enumerate_subsets,
    gm_from_mvb,
    linear_predictor,
    log_partition,
    log_prob,
    mean_mu,
    mvb_from_gm,
    mvb_from_table,
    s_values,
)
from .optimizer import FitOptions, FitResult, fit, lambda_path, lambda_upper_bound
from .penalty import build_groups, hierarchy_violations, penalty_value, recovered_structure
from .simgen import evaluate_recovery, model_spec, simulate
from .tuning import gacv_scores, tune

__all__ = [
    "Dataset", "Standardizer", "ModelConfig", "augment_response", "covariance_w",
    "enumerate_subsets", "gm_from_mvb", "linear_predictor", "log_partition", "log_prob",
    "mean_mu", "mvb_from_gm", "mvb_from_table", "s_values", "FitOptions", "FitResult",
    "fit", "lambda_path", "lambda_upper_bound", "build_groups", "hierarchy_violations",
    "penalty_value", "recovered_structure", "evaluate_recovery", "model_spec", "simulate",
    "gacv_scores", "tune",
]
