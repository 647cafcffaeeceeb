"""Regression with a reject option driven by conformal interval width."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import NoiseAssumption
from .conformal import LabelledDataset, SplitCalibration, calibrate_split, predict_interval
from .exceptions import DimensionError, DomainError
from .synthetic import make_rng, sample_heteroskedastic_sine, sine_basis


@dataclass(frozen=True)
class AbstentionRule:
    calibration: SplitCalibration
    width_threshold: float

    def __post_init__(self):
        if not self.width_threshold >= 0.0:
            raise DomainError(f"width_threshold must be >= 0, got {self.width_threshold}")


@dataclass(frozen=True)
class Decision:
    predict: bool
    value: float | None
    width: float


def decide(rule: AbstentionRule, x) -> Decision:
    """Predict the interval midpoint when the interval is no wider than the threshold."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    dim = rule.calibration.input_dim
    if dim is not None and x.size != dim:
        raise DimensionError(f"expected an input of dimension {dim}, got {x.size}")
    iv = predict_interval(rule.calibration, x)
    if iv.width <= rule.width_threshold:
        return Decision(True, 0.5 * (iv.lower + iv.upper), iv.width)
    return Decision(False, None, iv.width)


def abstention_bound(alpha: float, noise: NoiseAssumption) -> float:
    """Lower bound 1 - (1 + 1/b) alpha on P(|Y - f*(X)| <= width(X))."""
    return 1.0 - (1.0 + 1.0 / noise.b) * alpha


def error_bound_check(cal: SplitCalibration, noise: NoiseAssumption, test: LabelledDataset,
                      noise_free) -> float:
    """Empirical frequency of |Y - f*(X)| <= interval width on ``test``."""
    noise_free = np.asarray(noise_free, dtype=np.float64)
    if noise_free.size != test.n_obs:
        raise DimensionError("noise_free must have one value per test row")
    lower, upper = cal.bands(test.inputs)
    return float(np.mean(np.abs(test.outputs - noise_free) <= upper - lower))


def sine_calibration(n_train: int, n_cal: int, alpha: float, rng: np.random.Generator) -> SplitCalibration:
    """Least squares on (x, sin x), calibrated on fresh draws of the sine model."""
    xt, yt, _ = sample_heteroskedastic_sine(n_train, rng)
    xc, yc, _ = sample_heteroskedastic_sine(n_cal, rng)
    return calibrate_split(LabelledDataset(xt[:, None], yt), LabelledDataset(xc[:, None], yc),
                           alpha, features=sine_basis)


def abstention_sweep(thresholds, repetitions: int = 50, n_train: int = 200, n_cal: int = 200,
                     n_test: int = 1000, alpha: float = 0.1, seed: int = 0) -> list[tuple]:
    """Rejection rate and accepted-point MSE per threshold on the sine model.

    Each repetition draws a fresh calibration and test set; rates and squared
    errors are pooled over repetitions.  Returns rows
    ``(threshold, rejection_rate, mse_accepted)``; the MSE is NaN when nothing
    is accepted.
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    rejected = np.zeros(thresholds.size)
    sq_err = np.zeros(thresholds.size)
    accepted = np.zeros(thresholds.size)
    for rep in range(repetitions):
        rng = make_rng([seed, rep])
        cal = sine_calibration(n_train, n_cal, alpha, rng)
        x, y, _ = sample_heteroskedastic_sine(n_test, rng)
        lower, upper = cal.bands(x[:, None])
        width = upper - lower
        err2 = (y - 0.5 * (lower + upper)) ** 2
        for j, t in enumerate(thresholds):
            keep = width <= t
            rejected[j] += np.count_nonzero(~keep)
            accepted[j] += np.count_nonzero(keep)
            sq_err[j] += float(err2[keep].sum())
    total = repetitions * n_test
    rows = []
    for j, t in enumerate(thresholds):
        mse = sq_err[j] / accepted[j] if accepted[j] else math.nan
        rows.append((float(t), rejected[j] / total, mse))
    return rows


def write_sweep_csv(rows, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("threshold", "rejection_rate", "mse_accepted"))
        for t, r, m in rows:
            w.writerow((repr(t), repr(float(r)), repr(float(m))))
