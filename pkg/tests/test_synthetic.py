import math

import numpy as np
import pytest

from ccregion.exceptions import DomainError
from ccregion.synthetic import (
    NoiseKind,
    ScenarioConfig,
    augmented_features,
    make_rng,
    noise_variance,
    sample_heteroskedastic_sine,
    sample_noise,
    sample_scenario,
    sine_basis,
    sine_term,
)


def test_parse_aliases():
    assert NoiseKind.parse("aG") is NoiseKind.ADDITIVE_GAUSSIAN
    assert NoiseKind.parse("outliers") is NoiseKind.OUTLIERS
    assert NoiseKind.DISCRETE.short == "D"
    with pytest.raises(ValueError):
        NoiseKind.parse("cauchy")


def test_discrete_residuals_are_half():
    sc = sample_scenario(ScenarioConfig(noise="D", n_obs=500))
    resid = sc.labelled.outputs - sc.noise_free_outputs
    assert np.allclose(np.abs(resid), 0.5, atol=1e-12)
    assert 0.4 < np.mean(resid > 0) < 0.6


def test_additive_mean_and_variance():
    e = sample_noise("aG", np.zeros(200_000), make_rng(3))
    assert abs(e.mean()) < 4 / math.sqrt(200_000)
    assert e.var() == pytest.approx(1.0, rel=0.02)


def test_outlier_variance():
    assert noise_variance("O") == pytest.approx(90.00025)
    e = sample_noise("O", np.zeros(1_000_000), make_rng(5))
    assert e.var() == pytest.approx(90.00025, rel=0.01)


def test_multiplicative_scales_with_mean():
    mean = np.array([0.0, 2.0, -3.0])
    e = np.stack([sample_noise("mG", mean, make_rng(s)) for s in range(4000)])
    assert np.all(e[:, 0] == 0.0)
    assert e[:, 1].std() == pytest.approx(2.0, rel=0.05)
    assert e[:, 2].std() == pytest.approx(3.0, rel=0.05)


@pytest.mark.parametrize("kind", list(NoiseKind))
def test_median_zero(kind):
    e = sample_noise(kind, np.full(100_000, 1.5), make_rng(11))
    frac = np.mean(e > 0) + 0.5 * np.mean(e == 0)
    assert abs(frac - 0.5) < 0.01


def test_noise_variance_rejects_mg():
    with pytest.raises(DomainError):
        noise_variance("mG")


def test_augmented_features_examples():
    assert np.allclose(augmented_features([0.0, 0.0]), [0.0, 0.0, 0.0])
    out = augmented_features([0.6, 0.8])
    assert out[:2].tolist() == [0.6, 0.8]
    assert out[2] == pytest.approx(math.sin(8 * math.pi), abs=1e-12)
    x = np.array([0.1, 0.2, 0.3])
    want = math.sin(8 * math.pi * math.sqrt(0.14))
    assert augmented_features(x)[3] == pytest.approx(want, rel=1e-14)


def test_sine_term_recomputed():
    rng = np.random.default_rng(0)
    x = rng.random((50, 4))
    want = [0.5 * math.sin(8 * math.pi * math.hypot(*row)) for row in x]
    assert np.allclose(sine_term(x), want, rtol=0, atol=1e-13)


def test_nonlinear_scenario_means():
    sc = sample_scenario(ScenarioConfig(nonlinear=True, n_obs=40))
    x = sc.labelled.inputs
    assert np.allclose(sc.noise_free_outputs, x @ sc.theta_star + sine_term(x))


def test_seed_determinism():
    a = sample_scenario(ScenarioConfig(noise="O", data_seed=9))
    b = sample_scenario(ScenarioConfig(noise="O", data_seed=9))
    c = sample_scenario(ScenarioConfig(noise="O", data_seed=10))
    assert np.array_equal(a.labelled.outputs, b.labelled.outputs)
    assert np.array_equal(a.unlabelled.inputs, b.unlabelled.inputs)
    assert not np.array_equal(a.labelled.outputs, c.labelled.outputs)
    assert np.array_equal(a.theta_star, c.theta_star)


def test_shapes_and_ranges():
    sc = sample_scenario(ScenarioConfig(d=5, n_obs=7, n=11))
    assert sc.labelled.inputs.shape == (7, 5) and sc.unlabelled.inputs.shape == (11, 5)
    assert sc.labelled.inputs.min() >= 0 and sc.labelled.inputs.max() < 1
    with pytest.raises(DomainError):
        ScenarioConfig(d=0)


def test_export_round_trip(tmp_path):
    from ccregion.conformal import LabelledDataset, UnlabelledDataset
    from ccregion.synthetic import export_scenario
    sc = sample_scenario(ScenarioConfig())
    export_scenario(sc, tmp_path / "l.csv", tmp_path / "u.csv")
    assert np.array_equal(LabelledDataset.from_csv(tmp_path / "l.csv").outputs, sc.labelled.outputs)
    assert np.array_equal(UnlabelledDataset.from_csv(tmp_path / "u.csv").inputs, sc.unlabelled.inputs)


def test_heteroskedastic_sine():
    x, y, mean = sample_heteroskedastic_sine(100_000, make_rng(2))
    assert np.all(np.abs(x) <= 10)
    assert np.allclose(mean, np.sin(x))
    z = (y - mean) / (math.pi * np.abs(x) / 20)
    assert z.std() == pytest.approx(1.0, rel=0.02)
    assert sine_basis([2.0]).tolist() == [2.0, math.sin(2.0)]
