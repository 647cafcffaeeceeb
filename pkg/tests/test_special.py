import math
from fractions import Fraction

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from ccregion.exceptions import DomainError
from ccregion.special import (
    BetaParams,
    BinomialTailParams,
    F,
    beta_cdf,
    beta_fn,
    beta_quantile,
    binomial_tail,
    binomial_tail_many,
    incomplete_beta,
    ln_beta,
    ln_gamma,
    regularized_incomplete_beta,
)

# frozen from a 40-digit mpmath evaluation
LN_BETA_46_5 = -16.17577948229787156529162
BETA_CDF_09_46_5 = 0.4311984068290618910472705
BETA_Q01_46_5 = 0.8464518480955832482058832


def exact_tail(n, k, p):
    p = Fraction(p)
    return float(sum(math.comb(n, i) * p**i * (1 - p) ** (n - i) for i in range(k, n + 1)))


@pytest.mark.parametrize("x", [0.1, 0.5, 1.0, 1.5, 2.0, 7.25, 46.0, 51.0, 170.3, 1e4])
def test_ln_gamma_matches_stdlib(x):
    assert ln_gamma(x) == pytest.approx(math.lgamma(x), rel=1e-13, abs=1e-14)


def test_ln_beta_small_cases():
    assert ln_beta(1, 1) == pytest.approx(0.0, abs=1e-14)
    assert ln_beta(2, 3) == pytest.approx(math.log(1 / 12), rel=1e-14)
    assert beta_fn(2, 3) == pytest.approx(1 / 12, rel=1e-14)


def test_ln_beta_large_shapes():
    assert ln_beta(46, 5) == pytest.approx(LN_BETA_46_5, rel=1e-14)
    mp.mp.dps = 30
    for r, s in [(0.5, 0.5), (100, 3), (1e3, 2e3), (5e3, 7.5)]:
        assert ln_beta(r, s) == pytest.approx(float(mp.log(mp.beta(r, s))), rel=1e-12)


@pytest.mark.parametrize("r,s", [(0, 1), (-1, 2), (1, 0)])
def test_ln_beta_rejects_nonpositive(r, s):
    with pytest.raises(DomainError):
        ln_beta(r, s)


def test_binomial_tail_trivial():
    assert binomial_tail(BinomialTailParams(30, 0, 0.3)) == 1.0
    assert binomial_tail(BinomialTailParams(30, 5, 0.0)) == 0.0
    assert binomial_tail(BinomialTailParams(30, 30, 1.0)) == 1.0


def test_binomial_tail_exact_rational():
    assert F(10, 4, 0.7) == pytest.approx(exact_tail(10, 4, Fraction(7, 10)), rel=1e-14)


@pytest.mark.parametrize("n", [1, 7, 30, 60, 61, 100, 250])
def test_binomial_tail_vs_exact_sum(n):
    for k in sorted({0, 1, n // 3, n // 2, n - 1, n}):
        for p in (0.013, 0.37, 0.5, 0.9, 0.999):
            want = exact_tail(n, k, Fraction(p))
            assert F(n, k, p) == pytest.approx(want, rel=1e-11, abs=1e-300)


def test_binomial_tail_params_validated():
    with pytest.raises(DomainError):
        BinomialTailParams(5, 7, 0.5)
    with pytest.raises(DomainError):
        BinomialTailParams(5, 2, 1.5)


def test_incomplete_beta_examples():
    assert incomplete_beta(1.0, BetaParams(2, 3)) == pytest.approx(1 / 12, rel=1e-14)
    assert incomplete_beta(0.0, BetaParams(2, 3)) == 0.0
    quad, _ = integrate.quad(lambda t: t * t * (1 - t), 0, 0.5, epsabs=1e-15)
    assert incomplete_beta(0.5, BetaParams(3, 2)) == pytest.approx(quad, rel=1e-12)
    assert incomplete_beta(0.5, BetaParams(3, 2)) == pytest.approx(0.5**3 / 3 - 0.5**4 / 4, rel=1e-13)


def test_incomplete_beta_domain():
    with pytest.raises(DomainError):
        incomplete_beta(1.2, BetaParams(2, 3))
    with pytest.raises(DomainError):
        incomplete_beta(-0.1, BetaParams(2, 3))


@pytest.mark.parametrize("r,s", [(2, 3), (46, 5), (0.7, 12.5), (300, 280)])
def test_incomplete_beta_reflection(r, s):
    total = beta_fn(r, s)
    for z in (0.05, 0.3, 0.5, 0.77, 0.95):
        lhs = incomplete_beta(z, BetaParams(r, s))
        rhs = total - incomplete_beta(1 - z, BetaParams(s, r))
        assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10 * total)


def test_beta_cdf_examples():
    assert beta_cdf(1.0, BetaParams(46, 5)) == 1.0
    assert beta_cdf(0.5, BetaParams(1, 1)) == pytest.approx(0.5, abs=1e-15)
    assert beta_cdf(0.9, BetaParams(46, 5)) == pytest.approx(BETA_CDF_09_46_5, rel=1e-13)
    ratio = incomplete_beta(0.9, BetaParams(46, 5)) / beta_fn(46, 5)
    assert beta_cdf(0.9, BetaParams(46, 5)) == pytest.approx(ratio, rel=1e-12)


def test_regularized_beta_vs_scipy_grid():
    for r, s in [(0.5, 0.5), (1, 30), (24, 7), (46, 5), (250, 400)]:
        for z in np.linspace(0.01, 0.99, 25):
            assert regularized_incomplete_beta(z, r, s) == pytest.approx(
                stats.beta.cdf(z, r, s), rel=1e-10, abs=1e-14)


def test_beta_quantile_examples():
    assert beta_quantile(0.5, BetaParams(1, 1)) == pytest.approx(0.5, abs=1e-12)
    q = beta_quantile(0.1, BetaParams(46, 5))
    assert q == pytest.approx(BETA_Q01_46_5, abs=1e-12)
    assert beta_cdf(q, BetaParams(46, 5)) == pytest.approx(0.1, abs=1e-12)


@pytest.mark.parametrize("q", [0.0, 1.0])
def test_beta_quantile_rejects_endpoints(q):
    with pytest.raises(DomainError):
        beta_quantile(q, BetaParams(46, 5))


def test_beta_quantile_round_trip():
    for r, s in [(46, 5), (2, 2), (0.8, 3.0), (120, 40)]:
        for z in np.linspace(0.01, 0.99, 33):
            q = beta_cdf(z, BetaParams(r, s))
            # within 1e-7 of 0 or 1 the rounding of q alone moves z by more than 1e-8
            if 1e-7 < q < 1 - 1e-7:
                assert beta_quantile(q, BetaParams(r, s)) == pytest.approx(z, abs=1e-8)


@pytest.mark.parametrize("n", [5, 30, 100])
def test_tail_equals_regularized_beta(n):
    for k in range(1, n + 1):
        for p in np.linspace(0.01, 0.99, 99):
            assert abs(F(n, k, p) - regularized_incomplete_beta(p, k, n - k + 1)) <= 1e-9


def test_tail_many_matches_scalar(backend):
    p = np.linspace(0.0, 1.0, 101)
    for n, k in [(30, 24), (100, 3), (61, 60)]:
        want = np.array([F(n, k, x) for x in p])
        np.testing.assert_allclose(binomial_tail_many(n, k, p), want, rtol=1e-10, atol=1e-14)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 120), k=st.integers(0, 120), p=st.floats(0.0, 1.0))
def test_tail_monotone_in_k(n, k, p):
    k = min(k, n - 1)
    assert F(n, k + 1, p) <= F(n, k, p) + 1e-12


@settings(max_examples=200, deadline=None)
@given(n=st.integers(1, 120), k=st.integers(0, 120), p=st.floats(0.0, 0.99), dp=st.floats(0.0, 0.01))
def test_tail_monotone_in_p(n, k, p, dp):
    k = min(k, n)
    assert F(n, k, p) <= F(n, k, p + dp) + 1e-12
