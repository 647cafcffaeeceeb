"""Vote-threshold selection for the aggregated region Theta_k.

Each ``k_*`` function returns the largest k whose coverage lower bound reaches
1 - beta under one of four bound families:

* ``markov``: additively randomized Markov inequality (black-box intervals);
* ``worst_case``: infimum of E[F_k(Q)] over all conditional-coverage laws with
  E[Q] >= 1 - alpha', which is attained by a two-point mixture;
* ``split``: exact Beta law of split-conformal conditional coverage;
* ``pac``: high-probability version over the calibration draw.
"""
from __future__ import annotations

import csv
import functools
import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .conformal import beta_shapes
from .exceptions import DomainError, NoValidKError, VacuousGuaranteeError
from .special import (
    BetaParams,
    F,
    beta_quantile,
    binomial_tail_many,
    incomplete_beta,
    ln_beta,
)

METHODS = ("markov", "worst_case", "split", "pac")

GRID = 512
REFINE_GRID = 5120
DEFAULT_DELTA = 0.1
_ROUND_SLACK = 1e-9


@dataclass(frozen=True)
class NoiseAssumption:
    """Noise model: ``b`` bounds min(P(xi >= 0 | x), P(xi <= 0 | x)) from below.

    ``assumption3`` asserts that noise-free outputs enjoy the same coverage as
    the noisy ones, which removes the 1/b inflation.
    """
    b: float = 0.5
    assumption3: bool = False

    def __post_init__(self):
        if not 0.0 < self.b <= 0.5:
            raise DomainError(f"b must lie in (0, 0.5], got {self.b}")

    def alpha_prime(self, alpha: float) -> float:
        return alpha if self.assumption3 else alpha / self.b


@dataclass(frozen=True)
class KSelection:
    method: str
    k: int
    guaranteed_coverage: float
    randomizer_draw: float | None = None
    inputs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if (self.randomizer_draw is not None) != (self.method == "markov"):
            raise DomainError("randomizer_draw is recorded for the markov method only")


def noise_free_alpha(alpha: float, noise: NoiseAssumption) -> float:
    """Miscoverage level alpha' for the noise-free outputs."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    a = noise.alpha_prime(alpha)
    if a >= 1.0:
        raise VacuousGuaranteeError(f"alpha / b = {a:g} >= 1: no noise-free coverage guarantee")
    return a


def _check_level(name: str, value: float) -> None:
    if not 0.0 < value < 1.0:
        raise DomainError(f"{name} must lie in (0, 1), got {value}")


# -- randomized Markov ------------------------------------------------------------

def markov_base_k(n: int, alpha_prime: float, beta: float) -> int:
    return int(math.floor(n + 1 - n * alpha_prime / beta + _ROUND_SLACK))


def markov_bound(n: int, k: int, alpha_prime: float) -> float:
    """1 - n alpha' / (n - k + 1), clipped to [0, 1]; Theta_0 always covers."""
    if k <= 0:
        return 1.0
    return min(1.0, max(0.0, 1.0 - n * alpha_prime / (n - k + 1)))


def k_markov(n: int, alpha_prime: float, beta: float, seed=0) -> KSelection:
    """Base threshold plus floor(U), U ~ Unif(0, n - k_base + 1).

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    _check_level("beta", beta)
    base = markov_base_k(n, alpha_prime, beta)
    if base < 1:
        raise NoValidKError(
            f"markov base threshold {base} < 1 for n={n}, alpha'={alpha_prime}, beta={beta}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.Generator(np.random.Philox(seed))
    u = float(rng.uniform(0.0, n - base + 1))
    k = min(base + int(math.floor(u)), n)
    return KSelection("markov", k, markov_bound(n, base, alpha_prime), randomizer_draw=u,
                      inputs={"n": n, "alpha_prime": alpha_prime, "beta": beta, "k_base": base})


# -- worst-case dependency --------------------------------------------------------

def _mixture_min(n, k, target, v, u):
    fv = binomial_tail_many(n, k, v)
    fu = binomial_tail_many(n, k, u)
    return kernels.min_mixture(v, fv, u, fu, target)


@functools.lru_cache(maxsize=4096)
def worst_case_coverage(n: int, k: int, alpha_prime: float, grid: int = GRID,
                        refine: int = REFINE_GRID) -> float:
    """Minimum of S(u, v, k) over v in [0, 1-alpha'), u in (1-alpha', 1].

    A ``grid`` x ``grid`` scan locates the best cell, a ``refine`` x ``refine``
    scan over its neighbourhood polishes it, and the limit u, v -> 1 - alpha'
    (worth F_k(1 - alpha')) is always included.
    """
    if grid < 100:
        raise DomainError("grid needs at least 100 points per axis")
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    if alpha_prime <= 0.0:
        return 1.0
    if alpha_prime >= 1.0:
        return F(n, k, 0.0)
    t = 1.0 - alpha_prime
    v = t * np.arange(grid, dtype=np.float64) / grid
    u = t + alpha_prime * np.arange(1, grid + 1, dtype=np.float64) / grid
    best, a, b = _mixture_min(n, k, t, v, u)
    candidates = [F(n, k, t)]
    if a >= 0:
        candidates.append(best)
        if refine:
            v_lo = v[max(a - 1, 0)]
            v_hi = v[a + 1] if a + 1 < grid else t
            u_lo = u[b - 1] if b > 0 else t
            u_hi = u[min(b + 1, grid - 1)]
            vr = np.linspace(v_lo, v_hi, refine, endpoint=False)
            ur = np.linspace(u_hi, u_lo, refine, endpoint=False)[::-1].copy()
            fine, fa, _ = _mixture_min(n, k, t, vr, ur)
            if fa >= 0:
                candidates.append(fine)
    return float(min(1.0, max(0.0, min(candidates))))


def k_worst_case(n: int, alpha_prime: float, beta: float, grid: int = GRID,
                 refine: int = REFINE_GRID) -> KSelection:
    _check_level("beta", beta)
    inputs = {"n": n, "alpha_prime": alpha_prime, "beta": beta, "grid": grid}
    for k in range(n, 0, -1):
        cov = worst_case_coverage(n, k, alpha_prime, grid, refine)
        if cov >= 1.0 - beta:
            return KSelection("worst_case", k, cov, inputs=inputs)
    return KSelection("worst_case", 0, 1.0, inputs=inputs)


# -- split conformal Beta law ------------------------------------------------------

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(32)


def _gauss_legendre(f, a, b):
    half = 0.5 * (b - a)
    x = a + half * (_GL_NODES + 1.0)
    return half * float(np.dot(_GL_WEIGHTS, f(x)))


def adaptive_gauss_legendre(f, a: float, b: float, tol: float = 1e-14, max_depth: int = 30) -> float:
    """Integrate a vectorized ``f`` over [a, b] by recursive interval halving."""
    def rec(lo, hi, whole, depth):
        mid = 0.5 * (lo + hi)
        left = _gauss_legendre(f, lo, mid)
        right = _gauss_legendre(f, mid, hi)
        if depth >= max_depth or abs(left + right - whole) <= tol * max(1.0, abs(left + right)):
            return left + right
        return rec(lo, mid, left, depth + 1) + rec(mid, hi, right, depth + 1)

    return rec(a, b, _gauss_legendre(f, a, b), 0)


def _ln_binom(n: int, m: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(m + 1) - math.lgamma(n - m + 1)


def _h_assumption3(n, k, i_a, j_a):
    lb = ln_beta(i_a, j_a)
    logs = np.array([_ln_binom(n, m) + ln_beta(i_a + m, n - m + j_a) - lb for m in range(k, n + 1)])
    top = logs.max()
    return math.exp(top) * float(np.sum(np.exp(logs - top)))


def _h_quadrature(n, k, i_a, j_a, b):
    # substitute p = 1 - b t so that Q' = 1 - (1 - p) / b = 1 - t and t runs over [0, 1]
    lb = ln_beta(i_a, j_a)

    def integrand(t):
        tail = binomial_tail_many(n, k, np.clip(1.0 - t, 0.0, 1.0))
        with np.errstate(divide="ignore"):
            logw = (i_a - 1) * np.log1p(-b * t) + (j_a - 1) * np.log(b * t) + math.log(b) - lb
        return tail * np.exp(logw)

    return adaptive_gauss_legendre(integrand, 0.0, 1.0)


def split_bound_H(n: int, k: int, n_cal: int, alpha: float, noise: NoiseAssumption) -> float:
    """Expected binomial tail E[F_k(Q')] with Q ~ Beta(i_alpha, j_alpha).

    Under assumption 3 Q' = Q and the closed-form single sum is evaluated in
    log space.  Otherwise Q' = 1 - (1 - Q) / b, the event Q' <= 0 contributes
    nothing, and the integral is computed by adaptive Gauss-Legendre.
    """
    i_a, j_a = beta_shapes(alpha, n_cal)
    if k > n:
        return 0.0
    k = max(k, 0)
    if noise.assumption3:
        value = 1.0 if k == 0 else _h_assumption3(n, k, i_a, j_a)
    else:
        value = _h_quadrature(n, k, i_a, j_a, noise.b)
    return float(min(1.0, max(0.0, value)))


def _upper_beta_integral_exact(b, r: int, s: int):
    # integral of x^(r-1) (1-x)^(s-1) over [1-b, 1] = integral of y^(s-1) (1-y)^(r-1) over [0, b]
    return sum(Fraction(math.comb(r - 1, l) * (-1) ** l) * b ** (s + l) / (s + l) for l in range(r))


def split_bound_H_double_sum(n: int, k: int, n_cal: int, alpha: float, b: float,
                             exact: bool = True) -> float:
    """Alternating double-sum closed form of H(k) without assumption 3.

    The (b - 1)^(i - j) terms cancel catastrophically in floating point once n
    passes ~20, so by default the sum runs in exact rational arithmetic (the
    Beta shapes are integers, making every term a polynomial in b).  This is a
    cross-check for small n, not the production path.
    """
    i_a, j_a = beta_shapes(alpha, n_cal)
    if not exact:
        lb = ln_beta(i_a, j_a)
        total = 0.0
        for m in range(max(k, 0), n + 1):
            inner = 0.0
            for l in range(m + 1):
                tail = incomplete_beta(b, BetaParams(n - m + j_a, i_a + l))
                inner += math.comb(m, l) * (b - 1.0) ** (m - l) * tail
            total += math.comb(n, m) * inner
        return total / (math.exp(lb) * b ** n)
    bq = Fraction(b)
    total = Fraction(0)
    for m in range(max(k, 0), n + 1):
        inner = Fraction(0)
        for l in range(m + 1):
            tail = _upper_beta_integral_exact(bq, i_a + l, n - m + j_a)
            inner += math.comb(m, l) * (bq - 1) ** (m - l) * tail
        total += math.comb(n, m) * inner
    beta_ij = Fraction(math.factorial(i_a - 1) * math.factorial(j_a - 1), math.factorial(i_a + j_a - 1))
    return float(total / (beta_ij * bq ** n))


def k_split(n: int, n_cal: int, alpha: float, beta: float, noise: NoiseAssumption) -> KSelection:
    _check_level("beta", beta)
    inputs = {"n": n, "n_cal": n_cal, "alpha": alpha, "beta": beta, "b": noise.b,
              "assumption3": noise.assumption3}
    for k in range(n, -1, -1):
        h = split_bound_H(n, k, n_cal, alpha, noise)
        if h >= 1.0 - beta:
            return KSelection("split", k, h, inputs=inputs)
    raise NoValidKError(f"H(0) < 1 - beta = {1 - beta}; the split bound cannot reach this level")


# -- PAC ---------------------------------------------------------------------------

def pac_alpha(alpha: float, n_cal: int, delta: float, refined: bool = False) -> float:
    """Inflated miscoverage alpha~(delta) holding with probability 1 - delta.

    The plain form adds sqrt(log(1/delta) / n_cal); the refined form reads it
    off the Beta(i_alpha, j_alpha) law: P(Q >= 1 - alpha~) = 1 - delta.
    """
    _check_level("delta", delta)
    if not refined:
        return alpha + math.sqrt(math.log(1.0 / delta) / n_cal)
    i_a, j_a = beta_shapes(alpha, n_cal)
    return 1.0 - beta_quantile(delta, BetaParams(i_a, j_a))


def pac_probability(alpha: float, n_cal: int, delta: float, noise: NoiseAssumption,
                    refined: bool = False) -> float:
    """Lower bound on the conditional noise-free coverage, valid w.p. 1 - delta."""
    a = pac_alpha(alpha, n_cal, delta, refined)
    return 1.0 - (a if noise.assumption3 else a / noise.b)


def k_pac(n: int, n_cal: int, alpha: float, beta: float, delta: float = DEFAULT_DELTA,
          noise: NoiseAssumption = NoiseAssumption(), refined: bool = False) -> KSelection:
    _check_level("beta", beta)
    p = pac_probability(alpha, n_cal, delta, noise, refined)
    inputs = {"n": n, "n_cal": n_cal, "alpha": alpha, "beta": beta, "delta": delta,
              "b": noise.b, "assumption3": noise.assumption3, "refined": refined, "p": p}
    if p < 0.0:
        raise NoValidKError(f"PAC coverage level 1 - alpha~/b = {p:g} < 0")
    for k in range(n, -1, -1):
        cov = F(n, k, p)
        if cov >= 1.0 - beta:
            return KSelection("pac", k, cov, inputs=inputs)
    raise AssertionError("unreachable: F_0 = 1")


def select_k(method: str, *, n: int, n_cal: int, alpha: float, beta: float,
             noise: NoiseAssumption, delta: float = DEFAULT_DELTA, seed=0,
             refined: bool = False) -> KSelection:
    """Dispatch on ``method``."""
    if method == "markov":
        return k_markov(n, noise_free_alpha(alpha, noise), beta, seed)
    if method == "worst_case":
        return k_worst_case(n, noise_free_alpha(alpha, noise), beta)
    if method == "split":
        return k_split(n, n_cal, alpha, beta, noise)
    if method == "pac":
        return k_pac(n, n_cal, alpha, beta, delta, noise, refined)
    raise DomainError(f"unknown method {method!r}")


# -- curves ------------------------------------------------------------------------

def coverage_curve(n: int, n_cal: int, alpha: float, noise: NoiseAssumption,
                   methods=METHODS, delta: float = DEFAULT_DELTA,
                   refined: bool = False) -> list[tuple[str, int, float]]:
    """Guaranteed coverage of Theta_k for k = 0..n, one block per method."""
    a_prime = noise.alpha_prime(alpha)
    rows = []
    for method in methods:
        if method == "pac":
            p = pac_probability(alpha, n_cal, delta, noise, refined)
        for k in range(n + 1):
            if method == "markov":
                cov = markov_bound(n, k, a_prime)
            elif method == "worst_case":
                cov = worst_case_coverage(n, k, a_prime)
            elif method == "split":
                cov = split_bound_H(n, k, n_cal, alpha, noise)
            elif method == "pac":
                cov = 1.0 if k == 0 else (F(n, k, p) if p >= 0 else 0.0)
            else:
                raise DomainError(f"unknown method {method!r}")
            rows.append((method, k, float(cov)))
    return rows


def pac_delta_curve(n: int, n_cal: int, alpha: float, noise: NoiseAssumption,
                    deltas=(0.01, 0.05, 0.1, 0.2, 0.5), refined: bool = False):
    """Rows (delta, k, coverage) of the PAC guarantee, plus the H(k) curve as delta = 'H'."""
    rows = []
    for delta in deltas:
        p = pac_probability(alpha, n_cal, delta, noise, refined)
        for k in range(n + 1):
            cov = 1.0 if k == 0 else (F(n, k, p) if p >= 0 else 0.0)
            rows.append((f"{delta:g}", k, float(cov)))
    for k in range(n + 1):
        rows.append(("H", k, split_bound_H(n, k, n_cal, alpha, noise)))
    return rows


def write_curve_csv(rows, path, header=("method", "k", "coverage")) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for label, k, cov in rows:
            writer.writerow([label, k, repr(cov)])
