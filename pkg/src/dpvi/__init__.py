"""Differentially private variational inference with aligned gradients.

The package trains diagonal and full-rank Gaussian posterior approximations
under DP-SGD using several gradient estimators, and post-processes the
resulting parameter traces (iterate averaging, convergence detection,
noise-aware variance inflation).
"""

from dpvi.transforms import Transform, transform_deriv, transform_inverse, transform_value
from dpvi.guide import DiagonalGuide, FullRankGuide
from dpvi.models import (
    Dataset,
    LinearRegression,
    LogisticRegression,
    PoissonRegression,
    make_model,
)
from dpvi.gradest import Variant
from dpvi.privacy import DpSgdConfig, PrivacySpend
from dpvi.accountant import account_privacy, calibrate_noise
from dpvi.trainer import Trace, run_dpvi
from dpvi.traceanalysis import (
    build_noise_aware_posterior,
    detect_burn_out,
    estimate_dp_noise_variance,
    iterate_average,
)

__version__ = "0.1.0"

__all__ = [
    "Transform",
    "transform_value",
    "transform_deriv",
    "transform_inverse",
    "DiagonalGuide",
    "FullRankGuide",
    "Dataset",
    "LogisticRegression",
    "LinearRegression",
    "PoissonRegression",
    "make_model",
    "Variant",
    "DpSgdConfig",
    "PrivacySpend",
    "account_privacy",
    "calibrate_noise",
    "Trace",
    "run_dpvi",
    "detect_burn_out",
    "iterate_average",
    "estimate_dp_noise_variance",
    "build_noise_aware_posterior",
]
