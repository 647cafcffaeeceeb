"""Beta, incomplete Beta and binomial-tail primitives.

Everything here is a pure function of its arguments.  ``binomial_tail`` is the
upper tail ``F_k(p) = P(Binomial(n, p) >= k)`` used by every coverage bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

# Lanczos approximation, g = 7, 9 coefficients.
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_LN_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

# below this the direct Kahan sum is used for F_k; above, the incomplete Beta identity
DIRECT_SUM_MAX_N = 60

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 10_000


@dataclass(frozen=True)
class BinomialTailParams:
    n: int
    k: int
    p: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n}")
        if int(self.k) != self.k or not 0 <= self.k <= self.n + 1:
            raise DomainError(f"k must be an integer in [0, n+1], got {self.k}")
        if not 0.0 <= self.p <= 1.0:
            raise DomainError(f"p must lie in [0, 1], got {self.p}")


@dataclass(frozen=True)
class BetaParams:
    r: float
    s: float

    def __post_init__(self):
        if not (self.r > 0 and self.s > 0) or not (math.isfinite(self.r) and math.isfinite(self.s)):
            raise DomainError(f"Beta shapes must be positive and finite, got ({self.r}, {self.s})")


def ln_gamma(x: float) -> float:
    """Log-gamma for x > 0 via the Lanczos approximation."""
    if not x > 0:
        raise DomainError(f"ln_gamma needs x > 0, got {x}")
    if x < 0.5:
        # reflection keeps the series in its accurate range
        return math.log(math.pi / math.sin(math.pi * x)) - ln_gamma(1.0 - x)
    x -= 1.0
    acc = _LANCZOS[0]
    for i in range(1, len(_LANCZOS)):
        acc += _LANCZOS[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return _LN_SQRT_2PI + (x + 0.5) * math.log(t) - t + math.log(acc)


def _stirling_correction(x: float) -> float:
    # ln Gamma(x) - [(x - 1/2) ln x - x + ln sqrt(2 pi)], valid for x >= 10
    z = 1.0 / (x * x)
    return (
        1.0 / 12.0
        + z * (-1.0 / 360.0
        + z * (1.0 / 1260.0
        + z * (-1.0 / 1680.0
        + z * (1.0 / 1188.0
        + z * (-691.0 / 360360.0
        + z * (1.0 / 156.0))))))
    ) / x


def ln_beta(r: float, s: float) -> float:
    """ln B(r, s) = ln G(r) + ln G(s) - ln G(r + s).

    Large arguments go through Stirling corrections so the three big log-gamma
    terms never cancel against each other.
    """
    BetaParams(r, s)
    p, q = (r, s) if r <= s else (s, r)
    if p >= 10.0:
        corr = _stirling_correction(p) + _stirling_correction(q) - _stirling_correction(p + q)
        return (-0.5 * math.log(q) + _LN_SQRT_2PI + corr
                + (p - 0.5) * math.log(p / (p + q)) + q * math.log1p(-p / (p + q)))
    if q >= 10.0:
        corr = _stirling_correction(q) - _stirling_correction(p + q)
        return (ln_gamma(p) + corr + p - p * math.log(p + q)
                + (q - 0.5) * math.log1p(-p / (p + q)))
    return ln_gamma(p) + ln_gamma(q) - ln_gamma(p + q)


def beta_fn(r: float, s: float) -> float:
    return math.exp(ln_beta(r, s))


def _ln_binom(n: int, i: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1)


def _betacf(z: float, a: float, b: float) -> float:
    """Continued fraction for the incomplete Beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * z / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * z / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * z / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete Beta continued fraction did not converge (z={z}, a={a}, b={b})")


def _check_z(z: float) -> None:
    if not 0.0 <= z <= 1.0:
        raise DomainError(f"z must lie in [0, 1], got {z}")


def _ln_front(z: float, a: float, b: float) -> float:
    return a * math.log(z) + b * math.log1p(-z) - math.log(a)


def regularized_incomplete_beta(z: float, r: float, s: float) -> float:
    """I_z(r, s), the Beta(r, s) CDF."""
    _check_z(z)
    BetaParams(r, s)
    if z == 0.0:
        return 0.0
    if z == 1.0:
        return 1.0
    lb = ln_beta(r, s)
    if z < (r + 1.0) / (r + s + 2.0):
        return math.exp(_ln_front(z, r, s) - lb) * _betacf(z, r, s)
    return 1.0 - math.exp(_ln_front(1.0 - z, s, r) - lb) * _betacf(1.0 - z, s, r)


def incomplete_beta(z: float, params: BetaParams) -> float:
    """Non-regularized integral of x^(r-1) (1-x)^(s-1) over [0, z]."""
    _check_z(z)
    r, s = params.r, params.s
    if z == 0.0:
        return 0.0
    if z == 1.0:
        return beta_fn(r, s)
    if z < (r + 1.0) / (r + s + 2.0):
        return math.exp(_ln_front(z, r, s)) * _betacf(z, r, s)
    return beta_fn(r, s) - math.exp(_ln_front(1.0 - z, s, r)) * _betacf(1.0 - z, s, r)


def beta_cdf(z: float, params: BetaParams) -> float:
    return regularized_incomplete_beta(z, params.r, params.s)


def beta_quantile(q: float, params: BetaParams, tol: float = 1e-13) -> float:
    """Invert ``beta_cdf`` by bisection."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"quantile level must lie strictly inside (0, 1), got {q}")
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if beta_cdf(mid, params) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def _tail_direct(n: int, k: int, p: float) -> float:
    # Kahan-compensated sum of the pmf from k to n
    lp, lq = math.log(p), math.log1p(-p)
    total = 0.0
    comp = 0.0
    for i in range(k, n + 1):
        term = math.exp(_ln_binom(n, i) + i * lp + (n - i) * lq)
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
    return total


def binomial_tail(params: BinomialTailParams) -> float:
    """F_k(p) = sum_{i=k}^{n} C(n, i) p^i (1-p)^(n-i)."""
    n, k, p = params.n, params.k, params.p
    if k <= 0:
        return 1.0
    if k > n:
        return 0.0
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    if n <= DIRECT_SUM_MAX_N:
        value = _tail_direct(n, k, p)
    else:
        value = regularized_incomplete_beta(p, k, n - k + 1)
    return min(1.0, max(0.0, value))


def F(n: int, k: int, p: float) -> float:
    """Shorthand for ``binomial_tail(BinomialTailParams(n, k, p))``."""
    return binomial_tail(BinomialTailParams(n, k, p))


def binomial_tail_many(n: int, k: int, p) -> np.ndarray:
    """Vectorized F_k over an array of probabilities (compiled kernel when available)."""
    from . import kernels

    p = np.ascontiguousarray(p, dtype=np.float64)
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise DomainError("probabilities must lie in [0, 1]")
    return kernels.binomial_tail_many(int(n), int(k), p)
