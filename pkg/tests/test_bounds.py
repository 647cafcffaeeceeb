import math

import numpy as np
import pytest
from scipy import stats

from ccregion import kernels
from ccregion.bounds import (
    METHODS,
    NoiseAssumption,
    coverage_curve,
    k_markov,
    k_pac,
    k_split,
    k_worst_case,
    markov_base_k,
    markov_bound,
    noise_free_alpha,
    pac_alpha,
    pac_delta_curve,
    select_k,
    split_bound_H,
    split_bound_H_double_sum,
    worst_case_coverage,
)
from ccregion.exceptions import DomainError, NoValidKError, VacuousGuaranteeError
from ccregion.special import F

A3 = NoiseAssumption(0.5, True)
HALF = NoiseAssumption(0.5, False)

# E over Q ~ Beta(46, 5) of F_k(Q), from 40-digit mpmath quadrature
H_A3 = {1: 0.99999999999999999477, 10: 0.99999999061076297055, 20: 0.99782544461147855477,
        24: 0.94248293747784922425, 25: 0.8879051426936090103, 30: 0.088134716715662751639}
# same with the noise-free map Q -> 1 - (1 - Q) / 0.5
H_HALF = {10: 0.99976133443421902606, 20: 0.90852635547362344577, 21: 0.86233741179978620196,
          24: 0.6184675464527742855}


def test_noise_free_alpha():
    assert noise_free_alpha(0.1, HALF) == pytest.approx(0.2)
    assert noise_free_alpha(0.1, A3) == 0.1
    with pytest.raises(VacuousGuaranteeError):
        noise_free_alpha(0.3, NoiseAssumption(0.25))
    with pytest.raises(DomainError):
        NoiseAssumption(0.7)


def test_markov_examples():
    assert markov_base_k(30, 0.1, 0.5) == 25
    ks = {k_markov(30, 0.1, 0.5, seed=s).k for s in range(200)}
    assert min(ks) >= 25 and max(ks) <= 30 and len(ks) > 1
    with pytest.raises(NoValidKError):
        k_markov(30, 0.2, 0.1)
    assert k_markov(30, 0.1, 0.5, seed=11) == k_markov(30, 0.1, 0.5, seed=11)


def test_markov_curve_values():
    assert markov_bound(30, 1, 0.1) == pytest.approx(0.9)
    assert markov_bound(30, 0, 0.1) == 1.0


def _golden(f, lo, hi, iters=60):
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    for _ in range(iters):
        if f(c) < f(d):
            b = d
        else:
            a = c
        c, d = b - g * (b - a), a + g * (b - a)
    x = 0.5 * (a + b)
    return f(x), x


def _two_point_oracle(n, k, ap):
    """Coarse scan then nested golden-section search of the two-point mixture value."""
    t = 1.0 - ap
    tail = lambda p: stats.binom.sf(k - 1, n, p)

    def s(u, v):
        m = (t - v) / (u - v)
        return m * tail(u) + (1 - m) * tail(v)

    vs = np.linspace(0, t, 201)[:-1]
    us = np.linspace(t, 1, 201)[1:]
    best = min((s(u, v), u, v) for u in us for v in vs)
    _, u0, v0 = best
    hv = t / 200
    hu = ap / 200

    def inner(v):
        return _golden(lambda u: s(u, v), max(t + 1e-12, u0 - hu), min(1.0, u0 + hu))[0]

    val, _ = _golden(inner, max(0.0, v0 - hv), min(t - 1e-12, v0 + hv))
    return min(val, best[0], tail(t))


def test_worst_case_trivial():
    assert worst_case_coverage(30, 0, 0.1) == 1.0
    assert worst_case_coverage(30, 17, 0.0) == pytest.approx(1.0)


def test_worst_case_against_oracles():
    fine = worst_case_coverage(30, 20, 0.1, grid=5120, refine=5120)
    assert worst_case_coverage(30, 20, 0.1) == pytest.approx(fine, abs=1e-3)
    assert worst_case_coverage(30, 20, 0.1) == pytest.approx(_two_point_oracle(30, 20, 0.1), abs=1e-3)


def test_worst_case_lower_bounds_product():
    for ap in (0.05, 0.1, 0.2):
        assert worst_case_coverage(30, 30, ap) >= (1 - ap) ** 30 - 1e-3


def test_k_worst_case():
    assert k_worst_case(30, 0.1, 0.999).k == 30
    sel = k_worst_case(30, 0.5, 0.1)
    scan = max([k for k in range(0, 31) if k == 0 or worst_case_coverage(30, k, 0.5) >= 0.9])
    assert sel.k == scan
    ks = [k_worst_case(30, 0.1, b).k for b in (0.9, 0.7, 0.5, 0.3, 0.1)]
    assert ks == sorted(ks, reverse=True)


def test_mixture_kernels_agree():
    rng = np.random.default_rng(1)
    v = np.sort(rng.random(64)) * 0.8
    u = 0.8 + np.sort(rng.random(64)) * 0.2
    fv, fu = rng.random(64), rng.random(64)
    results = []
    for name in kernels.available_backends():
        kernels.use_backend(name)
        results.append(kernels.min_mixture(v, fv, u, fu, 0.8))
    kernels.use_backend(kernels.available_backends()[-1])
    best = min(fv[a] + (0.8 - v[a]) / (u[b] - v[a]) * (fu[b] - fv[a]) for a in range(64) for b in range(64))
    for r in results:
        assert r[0] == pytest.approx(best, abs=1e-15)
        assert r[1:] == results[0][1:]


def test_split_bound_examples():
    assert split_bound_H(30, 0, 50, 0.1, A3) == pytest.approx(1.0, abs=1e-12)
    assert split_bound_H(1, 1, 50, 0.1, A3) == pytest.approx(46 / 51, rel=1e-12)


@pytest.mark.parametrize("k", sorted(H_A3))
def test_split_bound_closed_form_frozen(k):
    assert split_bound_H(30, k, 50, 0.1, A3) == pytest.approx(H_A3[k], rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("k", sorted(H_HALF))
def test_split_bound_quadrature_frozen(k):
    assert split_bound_H(30, k, 50, 0.1, HALF) == pytest.approx(H_HALF[k], rel=1e-11)


@pytest.mark.parametrize("n", [5, 12, 30])
def test_double_sum_cross_check(n):
    for k in range(0, n + 1, max(1, n // 6)):
        assert split_bound_H_double_sum(n, k, 50, 0.1, 0.5) == pytest.approx(
            split_bound_H(n, k, 50, 0.1, HALF), abs=1e-12)


def test_split_bound_infeasible_quantile():
    with pytest.raises(Exception):
        split_bound_H(30, 5, 5, 0.1, A3)


def test_k_split():
    assert k_split(30, 50, 0.1, 0.9999, A3).k == 30
    scan = max(k for k in range(31) if split_bound_H(30, k, 50, 0.1, A3) >= 0.9)
    sel = k_split(30, 50, 0.1, 0.1, A3)
    assert sel.k == scan == 24
    assert k_split(30, 50, 0.1, 0.1, HALF).k == 20
    assert sel.k > markov_base_k(30, 0.1, 0.1)
    assert sel.k >= k_worst_case(30, 0.1, 0.1).k


def test_split_dominates_worst_case():
    for n_cal in (20, 50, 100):
        for alpha in (0.05, 0.1):
            for k in range(0, 31):
                assert split_bound_H(30, k, n_cal, alpha, A3) >= worst_case_coverage(30, k, alpha) - 1e-3


def test_pac():
    plain = k_pac(30, 50, 0.1, 0.1, 0.1, A3)
    refined = k_pac(30, 50, 0.1, 0.1, 0.1, A3, refined=True)
    assert refined.k >= plain.k
    for sel, ref in ((plain, False), (refined, True)):
        p = 1 - pac_alpha(0.1, 50, 0.1, ref)
        assert F(30, sel.k, p) >= 0.9
    assert pac_alpha(0.1, 50, 1 - 1e-12) == pytest.approx(0.1, abs=1e-5)
    near_one = k_pac(30, 50, 0.1, 0.1, 1 - 1e-12, A3).k
    assert near_one == max(k for k in range(31) if F(30, k, 0.9) >= 0.9)
    with pytest.raises(NoValidKError):
        k_pac(30, 10, 0.3, 0.1, 0.01, HALF)


def test_coverage_curves():
    rows = coverage_curve(30, 50, 0.1, A3)
    for method in METHODS:
        cov = [c for m, _, c in rows if m == method]
        assert len(cov) == 31 and cov[0] == 1.0
        assert all(b <= a + 1e-12 for a, b in zip(cov, cov[1:]))
    markov = dict((k, c) for m, k, c in rows if m == "markov")
    assert markov[1] == pytest.approx(0.9)
    split = dict((k, c) for m, k, c in rows if m == "split")
    for k in (0, 12, 24, 30):
        assert split[k] == split_bound_H(30, k, 50, 0.1, A3)
    pac_rows = pac_delta_curve(30, 50, 0.1, A3, deltas=(0.1, 0.5))
    assert {r[0] for r in pac_rows} == {"0.1", "0.5", "H"}


def test_select_k_dispatch():
    for m in METHODS:
        sel = select_k(m, n=30, n_cal=50, alpha=0.1, beta=0.1, noise=A3, seed=3)
        assert sel.method == m and 0 <= sel.k <= 30
    with pytest.raises(DomainError):
        select_k("bogus", n=30, n_cal=50, alpha=0.1, beta=0.1, noise=A3)
