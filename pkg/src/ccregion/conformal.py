"""Split conformal prediction with the absolute-residual score."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .exceptions import DimensionError, DomainError, InfeasibleQuantileError, SingularDesignError

RANK_TOL = 1e-10
# guards ceil/floor against products such as 0.9 * 10 = 9.000000000000002
_ROUND_SLACK = 1e-9


def _as_matrix(inputs) -> np.ndarray:
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] < 1:
        raise DimensionError(f"inputs must be a 2-D matrix with d >= 1 columns, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class LabelledDataset:
    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        x = _as_matrix(self.inputs)
        y = np.asarray(self.outputs, dtype=np.float64).reshape(-1)
        if x.shape[0] != y.shape[0]:
            raise DimensionError(f"{x.shape[0]} input rows but {y.shape[0]} outputs")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise DomainError("dataset contains non-finite entries")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", y)

    @property
    def n_obs(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "LabelledDataset":
        return LabelledDataset(self.inputs[idx], self.outputs[idx])

    def to_csv(self, path) -> None:
        header = [f"x{j}" for j in range(self.d)] + ["y"]
        _write_rows(path, header, np.column_stack([self.inputs, self.outputs]))

    @classmethod
    def from_csv(cls, path) -> "LabelledDataset":
        data = _read_rows(path)
        if data.shape[1] < 2:
            raise DimensionError("labelled CSV needs at least one input column and one output column")
        return cls(data[:, :-1], data[:, -1])


@dataclass(frozen=True)
class UnlabelledDataset:
    inputs: np.ndarray

    def __post_init__(self):
        x = _as_matrix(self.inputs)
        if x.shape[0] < 1:
            raise DomainError("unlabelled dataset needs at least one row")
        if not np.all(np.isfinite(x)):
            raise DomainError("dataset contains non-finite entries")
        object.__setattr__(self, "inputs", x)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    def to_csv(self, path) -> None:
        _write_rows(path, [f"x{j}" for j in range(self.d)], self.inputs)

    @classmethod
    def from_csv(cls, path) -> "UnlabelledDataset":
        return cls(_read_rows(path))


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


def _read_rows(path) -> np.ndarray:
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [[float(v) for v in row] for row in reader if row]
    return np.asarray(rows, dtype=np.float64)


@dataclass(frozen=True)
class PredictionInterval:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise DomainError(f"interval lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, y: float) -> bool:
        return self.lower <= y <= self.upper


def absolute_residual(y, y_hat):
    return np.abs(np.asarray(y) - np.asarray(y_hat))


def conformal_rank(alpha: float, n_cal: int) -> int:
    """1-indexed order statistic ceil((1 - alpha)(n_cal + 1)) used as the quantile."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    return int(math.ceil((1.0 - alpha) * (n_cal + 1) - _ROUND_SLACK))


def min_calibration_size(alpha: float) -> int:
    return int(math.ceil((1.0 - alpha) / alpha - _ROUND_SLACK))


def beta_shapes(alpha: float, n_cal: int) -> tuple[int, int]:
    """Shapes (i_alpha, j_alpha) of the conditional-coverage Beta law."""
    i_alpha = conformal_rank(alpha, n_cal)
    if i_alpha > n_cal:
        raise InfeasibleQuantileError(n_cal, alpha, min_calibration_size(alpha))
    return i_alpha, n_cal + 1 - i_alpha


def fit_least_squares(data: LabelledDataset, intercept: bool = False) -> np.ndarray:
    """Least-squares coefficients through an SVD of the design matrix.

    With ``intercept`` the first returned entry is the intercept.
    """
    x = data.inputs
    if intercept:
        x = np.column_stack([np.ones(x.shape[0]), x])
    n_rows, n_cols = x.shape
    if n_rows < n_cols:
        raise SingularDesignError(n_cols, n_rows)
    u, s, vt = np.linalg.svd(x, full_matrices=False)
    rank = int(np.sum(s > RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    if rank < n_cols:
        raise SingularDesignError(n_cols, rank)
    return vt.T @ ((u.T @ data.outputs) / s)


@dataclass(frozen=True)
class SplitCalibration:
    coef: np.ndarray
    calibration_scores: np.ndarray
    alpha: float
    quantile_radius: float
    intercept: float = 0.0
    features: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        scores = np.sort(np.asarray(self.calibration_scores, dtype=np.float64))
        object.__setattr__(self, "calibration_scores", scores)
        object.__setattr__(self, "coef", np.asarray(self.coef, dtype=np.float64))
        rank = conformal_rank(self.alpha, scores.size)
        if rank > scores.size:
            raise InfeasibleQuantileError(scores.size, self.alpha, min_calibration_size(self.alpha))
        if self.quantile_radius != scores[rank - 1]:
            raise DomainError("quantile_radius does not match the conformal rank of the scores")

    @classmethod
    def from_scores(cls, coef, scores: Sequence[float], alpha: float, intercept: float = 0.0,
                    features=None) -> "SplitCalibration":
        scores = np.sort(np.asarray(scores, dtype=np.float64))
        if np.any(scores < 0):
            raise DomainError("conformity scores must be nonnegative")
        rank = conformal_rank(alpha, scores.size)
        if rank > scores.size:
            raise InfeasibleQuantileError(scores.size, alpha, min_calibration_size(alpha))
        return cls(np.asarray(coef, dtype=np.float64), scores, alpha, float(scores[rank - 1]),
                   intercept, features)

    @property
    def n_cal(self) -> int:
        return self.calibration_scores.size

    @property
    def rank(self) -> int:
        return conformal_rank(self.alpha, self.n_cal)

    @property
    def input_dim(self) -> int | None:
        return None if self.features is not None else self.coef.size

    def predict(self, inputs) -> np.ndarray:
        x = np.asarray(inputs, dtype=np.float64)
        single = x.ndim == 1
        x = np.atleast_2d(x)
        if self.features is not None:
            x = np.apply_along_axis(self.features, 1, x)
        if x.shape[1] != self.coef.size:
            raise DimensionError(f"expected inputs of dimension {self.coef.size}, got {x.shape[1]}")
        out = x @ self.coef + self.intercept
        return out[0] if single else out

    def bands(self, inputs) -> tuple[np.ndarray, np.ndarray]:
        centre = np.atleast_1d(self.predict(np.atleast_2d(inputs)))
        q = self.quantile_radius
        return centre - q, centre + q


def split_calibrate(data: LabelledDataset, alpha: float, split_fraction: float = 0.5,
                    seed: int = 0, intercept: bool = False, features=None) -> SplitCalibration:
    """Shuffle under ``seed``, fit on the first part and calibrate on the rest.

    ``split_fraction`` is the share of rows used for training.  ``features`` is
    an optional row map applied before fitting and predicting.
    """
    if not 0.0 < split_fraction < 1.0:
        raise DomainError(f"split_fraction must lie in (0, 1), got {split_fraction}")
    rng = np.random.Generator(np.random.Philox(seed))
    perm = rng.permutation(data.n_obs)
    n_train = int(round(split_fraction * data.n_obs))
    n_cal = data.n_obs - n_train
    if n_train < 1 or n_cal < 1:
        raise DomainError(f"split of {data.n_obs} rows leaves an empty part")
    if conformal_rank(alpha, n_cal) > n_cal:
        raise InfeasibleQuantileError(n_cal, alpha, min_calibration_size(alpha))
    train, cal = data.subset(perm[:n_train]), data.subset(perm[n_train:])
    return calibrate_split(train, cal, alpha, intercept=intercept, features=features)


def calibrate_split(train: LabelledDataset, cal: LabelledDataset, alpha: float,
                    intercept: bool = False, features=None) -> SplitCalibration:
    """Fit on ``train`` and calibrate residual scores on ``cal`` (no shuffling)."""
    fit_x = train.inputs if features is None else np.apply_along_axis(features, 1, train.inputs)
    coef = fit_least_squares(LabelledDataset(fit_x, train.outputs), intercept=intercept)
    b0 = 0.0
    if intercept:
        b0, coef = float(coef[0]), coef[1:]
    cal_x = cal.inputs if features is None else np.apply_along_axis(features, 1, cal.inputs)
    scores = absolute_residual(cal.outputs, cal_x @ coef + b0)
    return SplitCalibration.from_scores(coef, scores, alpha, intercept=b0, features=features)


def predict_interval(cal: SplitCalibration, x) -> PredictionInterval:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("predict_interval takes a single input vector")
    centre = float(cal.predict(x))
    q = cal.quantile_radius
    return PredictionInterval(centre - q, centre + q)


def intervals_for(cal: SplitCalibration, data: UnlabelledDataset) -> list[PredictionInterval]:
    lower, upper = cal.bands(data.inputs)
    return [PredictionInterval(float(a), float(b)) for a, b in zip(lower, upper)]


def coverage_counts(lower, upper, noisy, noise_free, weights=None):
    """Fractions of ``noisy`` and ``noise_free`` values inside the closed bands.

    With ``weights`` the rows are treated as the atoms of a discrete law and the
    sums run in plain Python, so ``fractions.Fraction`` inputs stay exact.
    """
    if weights is None:
        lower, upper = np.asarray(lower), np.asarray(upper)
        noisy_cov = np.mean((lower <= noisy) & (noisy <= upper))
        clean_cov = np.mean((lower <= noise_free) & (noise_free <= upper))
        return float(noisy_cov), float(clean_cov)
    total = sum(weights)
    noisy_cov = sum(w for lo, hi, y, w in zip(lower, upper, noisy, weights) if lo <= y <= hi)
    clean_cov = sum(w for lo, hi, f, w in zip(lower, upper, noise_free, weights) if lo <= f <= hi)
    return noisy_cov / total, clean_cov / total


def discrete_counterexample():
    """Exact noisy and noise-free coverage of the adversarial 1-D example.

    theta* = 0, Gamma(X) = [X - 0.99, X + 0.99], noise +-0.02 with equal mass,
    X = 0 with probability 0.9 and X = 1 with probability 0.1.  Returns
    ``(noisy, noise_free)`` as exact fractions, 19/20 and 9/10.
    """
    from fractions import Fraction

    half = Fraction(99, 100)
    lower, upper, noisy, clean, weights = [], [], [], [], []
    for x, px in ((Fraction(0), Fraction(9, 10)), (Fraction(1), Fraction(1, 10))):
        for eps in (Fraction(2, 100), Fraction(-2, 100)):
            f_star = 0 * x
            lower.append(x - half)
            upper.append(x + half)
            noisy.append(f_star + eps)
            clean.append(f_star)
            weights.append(px / 2)
    return coverage_counts(lower, upper, noisy, clean, weights=weights)
