"""Synthetic linear benchmarks and the nonlinear hypothesis-test model.

All randomness comes from ``numpy.random.Philox`` (a counter-based generator)
so datasets replicate across platforms for a given seed.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np

from .conformal import LabelledDataset, UnlabelledDataset
from .exceptions import DomainError

OUTLIER_WEIGHTS = (0.9, 0.1)
OUTLIER_SDS = (10.0, 0.05)
DISCRETE_ATOM = 0.5
SINE_AMPLITUDE = 0.5
SINE_FREQUENCY = 8.0 * math.pi


class NoiseKind(str, enum.Enum):
    ADDITIVE_GAUSSIAN = "additive_gaussian"
    MULTIPLICATIVE_GAUSSIAN = "multiplicative_gaussian"
    OUTLIERS = "outliers"
    DISCRETE = "discrete"

    @classmethod
    def parse(cls, value) -> "NoiseKind":
        if isinstance(value, cls):
            return value
        aliases = {"aG": cls.ADDITIVE_GAUSSIAN, "mG": cls.MULTIPLICATIVE_GAUSSIAN,
                   "O": cls.OUTLIERS, "D": cls.DISCRETE}
        if value in aliases:
            return aliases[value]
        return cls(value)

    @property
    def short(self) -> str:
        return {"additive_gaussian": "aG", "multiplicative_gaussian": "mG",
                "outliers": "O", "discrete": "D"}[self.value]


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def sample_noise(kind: NoiseKind, mean: np.ndarray, rng: np.random.Generator,
                 scale: float = 1.0) -> np.ndarray:
    """Draw noise for outputs whose noise-free values are ``mean``.

    Every law here has conditional median zero, so b = 0.5.
    """
    kind = NoiseKind.parse(kind)
    size = np.shape(mean)
    if kind is NoiseKind.ADDITIVE_GAUSSIAN:
        return scale * rng.standard_normal(size)
    if kind is NoiseKind.MULTIPLICATIVE_GAUSSIAN:
        # second parameter read as a standard deviation; sign dropped
        return scale * np.abs(mean) * rng.standard_normal(size)
    if kind is NoiseKind.OUTLIERS:
        wide = rng.random(size) < OUTLIER_WEIGHTS[0]
        sd = np.where(wide, OUTLIER_SDS[0], OUTLIER_SDS[1])
        return scale * sd * rng.standard_normal(size)
    if kind is NoiseKind.DISCRETE:
        return scale * np.where(rng.random(size) < 0.5, -DISCRETE_ATOM, DISCRETE_ATOM)
    raise DomainError(f"unknown noise kind {kind}")


def noise_variance(kind: NoiseKind) -> float:
    """Marginal variance of the homoskedastic laws (mG depends on x)."""
    kind = NoiseKind.parse(kind)
    if kind is NoiseKind.ADDITIVE_GAUSSIAN:
        return 1.0
    if kind is NoiseKind.OUTLIERS:
        return OUTLIER_WEIGHTS[0] * OUTLIER_SDS[0] ** 2 + OUTLIER_WEIGHTS[1] * OUTLIER_SDS[1] ** 2
    if kind is NoiseKind.DISCRETE:
        return DISCRETE_ATOM ** 2
    raise DomainError(f"{kind.value} noise has no fixed variance")


def augmented_features(x) -> np.ndarray:
    """Append sin(8 pi ||x||_2) to x."""
    x = np.asarray(x, dtype=np.float64)
    return np.append(x, math.sin(SINE_FREQUENCY * math.sqrt(float(np.dot(x, x)))))


def sine_term(inputs: np.ndarray) -> np.ndarray:
    return SINE_AMPLITUDE * np.sin(SINE_FREQUENCY * np.linalg.norm(inputs, axis=1))


@dataclass(frozen=True)
class ScenarioConfig:
    d: int = 3
    n_obs: int = 100
    n: int = 30
    noise: NoiseKind = NoiseKind.ADDITIVE_GAUSSIAN
    theta_seed: int = 0
    data_seed: int = 1
    nonlinear: bool = False
    noise_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "noise", NoiseKind.parse(self.noise))
        if self.d < 1 or self.n_obs < 1 or self.n < 1:
            raise DomainError("d, n_obs and n must be positive")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["noise"] = self.noise.value
        return out


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    theta_star: np.ndarray
    labelled: LabelledDataset
    unlabelled: UnlabelledDataset
    # noise-free means of the labelled rows (including the sine term when nonlinear)
    noise_free_outputs: np.ndarray

    def linear_outputs(self, inputs) -> np.ndarray:
        return np.asarray(inputs) @ self.theta_star

    def mean_outputs(self, inputs) -> np.ndarray:
        inputs = np.atleast_2d(inputs)
        out = inputs @ self.theta_star
        if self.config.nonlinear:
            out = out + sine_term(inputs)
        return out

    def draw_labelled(self, size: int, rng: np.random.Generator) -> tuple[LabelledDataset, np.ndarray]:
        """Fresh labelled rows from the same law; returns (data, noise-free means)."""
        x = rng.random((size, self.config.d))
        mean = self.mean_outputs(x)
        y = mean + sample_noise(self.config.noise, x @ self.theta_star, rng, self.config.noise_scale)
        return LabelledDataset(x, y), mean

    def draw_inputs(self, size: int, rng: np.random.Generator) -> np.ndarray:
        return rng.random((size, self.config.d))


def sample_theta(d: int, seed) -> np.ndarray:
    return make_rng(seed).standard_normal(d)


def sample_scenario(config: ScenarioConfig) -> Scenario:
    theta = sample_theta(config.d, config.theta_seed)
    rng = make_rng(config.data_seed)
    x_obs = rng.random((config.n_obs, config.d))
    x_new = rng.random((config.n, config.d))
    linear = x_obs @ theta
    mean = linear + sine_term(x_obs) if config.nonlinear else linear
    y = mean + sample_noise(config.noise, linear, rng, config.noise_scale)
    return Scenario(config, theta, LabelledDataset(x_obs, y), UnlabelledDataset(x_new), mean)


def export_scenario(scenario: Scenario, labelled_path, unlabelled_path) -> None:
    scenario.labelled.to_csv(labelled_path)
    scenario.unlabelled.to_csv(unlabelled_path)


# Heteroskedastic sine model used for the abstention trade-off:
# Y = sin(X) + (pi |X| / 20) xi, xi ~ N(0, 1), X ~ Unif(-SINE_X_RANGE, SINE_X_RANGE)
SINE_X_RANGE = 10.0


def sample_heteroskedastic_sine(size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (x, y, noise-free mean)."""
    x = rng.uniform(-SINE_X_RANGE, SINE_X_RANGE, size)
    mean = np.sin(x)
    y = mean + (math.pi * np.abs(x) / 20.0) * rng.standard_normal(size)
    return x, y, mean


def sine_basis(row) -> np.ndarray:
    """Row map x -> (x, sin x) for the abstention base predictor."""
    x = float(np.asarray(row).reshape(-1)[0])
    return np.array([x, math.sin(x)])
