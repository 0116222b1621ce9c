"""Robust linear regression under oblivious outliers.

Huber-loss M-estimation, coordinate-wise median estimators with
bootstrapping (dense, sparse and non-spherical), spreadness diagnostics
for design matrices, and a reproducible Monte-Carlo harness.
"""

from .errors import (EstimationFailure, InvalidArgument, PreconditionError,
                     RobustRegressError, SingularMatrixError, StateError)
from .huber import EstimatorResult, HuberParams, minimize_huber
from .median import MedianConfig, bootstrap_median, select_median, sparse_bootstrap
from .model import NoiseSpec, RegressionInstance, build_instance, gaussian_design, make_noise
from .rng import RandomSource

__version__ = "0.1.0"

__all__ = [
    "EstimationFailure", "EstimatorResult", "HuberParams", "InvalidArgument",
    "MedianConfig", "NoiseSpec", "PreconditionError", "RandomSource",
    "RegressionInstance", "RobustRegressError", "SingularMatrixError", "StateError",
    "bootstrap_median", "build_instance", "gaussian_design", "make_noise",
    "minimize_huber", "select_median", "sparse_bootstrap",
]
