"""Finite-sample confidence regions for linear-model parameters from split conformal intervals."""
__version__ = "0.1.0"

from .bounds import KSelection, NoiseAssumption, select_k, split_bound_H, worst_case_coverage
from .conformal import (
    LabelledDataset,
    PredictionInterval,
    SplitCalibration,
    UnlabelledDataset,
    intervals_for,
    predict_interval,
    split_calibrate,
)
from .exceptions import CCRError
from .kernels import BACKEND
from .region import RegionSpec, build_region, coordinate_intervals, is_empty, membership, optimize
from .special import F, beta_quantile, regularized_incomplete_beta
from .synthetic import NoiseKind, ScenarioConfig, sample_scenario

__all__ = [
    "BACKEND", "CCRError", "F", "KSelection", "LabelledDataset", "NoiseAssumption", "NoiseKind",
    "PredictionInterval", "RegionSpec", "ScenarioConfig", "SplitCalibration", "UnlabelledDataset",
    "beta_quantile", "build_region", "coordinate_intervals", "intervals_for", "is_empty",
    "membership", "optimize", "predict_interval", "regularized_incomplete_beta", "sample_scenario",
    "select_k", "split_bound_H", "split_calibrate", "worst_case_coverage",
]
