"""Pure-Python/numpy versions of the hot kernels.

Each function mirrors ``_ckernels.pyx`` operation for operation (same pivot
rules, same tie-breaking) so either backend gives the same answers.
"""
import math

import numpy as np

# simplex status codes
OPTIMAL = 0
UNBOUNDED = 1
ITERATION_LIMIT = 2
INFEASIBLE = 3

BASIC = 0
AT_LOWER = 1
AT_UPPER = 2

_CHUNK = 256


def binomial_tail_many(n, k, p):
    out = np.empty(p.shape[0], dtype=np.float64)
    if k <= 0:
        out.fill(1.0)
        return out
    if k > n:
        out.fill(0.0)
        return out
    i = np.arange(k, n + 1, dtype=np.float64)
    ln_c = np.array([math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)
                     for j in range(k, n + 1)])
    interior = (p > 0.0) & (p < 1.0)
    out[p <= 0.0] = 0.0
    out[p >= 1.0] = 1.0
    idx = np.flatnonzero(interior)
    for start in range(0, idx.size, 4096):
        sel = idx[start:start + 4096]
        pp = p[sel]
        logs = ln_c + np.outer(np.log(pp), i) + np.outer(np.log1p(-pp), n - i)
        out[sel] = np.exp(logs).sum(axis=1)
    np.clip(out, 0.0, 1.0, out=out)
    return out


def min_mixture(v, fv, u, fu, target):
    """Minimum of (1-m) fv[a] + m fu[b], m = (target - v[a]) / (u[b] - v[a]).

    Returns ``(best, a, b)``; the first minimiser in row-major order wins.
    """
    best = math.inf
    best_a = -1
    best_b = -1
    for start in range(0, v.shape[0], _CHUNK):
        vv = v[start:start + _CHUNK, None]
        ff = fv[start:start + _CHUNK, None]
        gap = u[None, :] - vv
        with np.errstate(divide="ignore", invalid="ignore"):
            m = (target - vv) / gap
            s = ff + m * (fu[None, :] - ff)
        s = np.where(gap > 0.0, s, math.inf)
        flat = int(np.argmin(s))
        a, b = divmod(flat, s.shape[1])
        if s[a, b] < best:
            best = float(s[a, b])
            best_a = start + a
            best_b = b
    return best, best_a, best_b


def simplex_iterate(T, beta, dj, basis, state, lo, up, tol_piv, tol_dj,
                    max_iter, bland_after, bland):
    """Bounded-variable primal simplex iterations on a dense tableau.

    ``T`` holds B^-1 A, ``beta`` the basic values, ``dj`` the reduced costs.
    All arrays are updated in place.  Returns ``(status, iterations, bland)``.
    """
    m, ncol = T.shape
    iterations = 0
    degenerate = 0
    while True:
        if iterations >= max_iter:
            return ITERATION_LIMIT, iterations, bland
        # pricing
        enter = -1
        best_gain = 0.0
        for j in range(ncol):
            st = state[j]
            if st == BASIC or lo[j] == up[j]:
                continue
            if st == AT_LOWER:
                gain = -dj[j]
            else:
                gain = dj[j]
            if gain > tol_dj:
                if bland:
                    enter = j
                    break
                if gain > best_gain:
                    best_gain = gain
                    enter = j
        if enter < 0:
            return OPTIMAL, iterations, bland
        direction = 1.0 if state[enter] == AT_LOWER else -1.0

        # ratio test
        col = T[:, enter]
        alpha = direction * col
        row = -1
        row_lim = math.inf
        row_piv = 0.0
        to_lower = True
        for i in range(m):
            a = alpha[i]
            bi = basis[i]
            if a > tol_piv:
                lim = (beta[i] - lo[bi]) / a
                lower_hit = True
            elif a < -tol_piv and up[bi] < math.inf:
                lim = (up[bi] - beta[i]) / (-a)
                lower_hit = False
            else:
                continue
            if lim < 0.0:
                lim = 0.0
            if row < 0 or lim < row_lim - 1e-12:
                take = True
            elif lim <= row_lim + 1e-12:
                if bland:
                    take = bi < basis[row]
                else:
                    take = abs(a) > abs(row_piv)
            else:
                take = False
            if take:
                row = i
                row_lim = lim
                row_piv = a
                to_lower = lower_hit
        flip = up[enter] - lo[enter]
        if row < 0 and flip == math.inf:
            return UNBOUNDED, iterations, bland
        iterations += 1
        if row < 0 or flip <= row_lim:
            step = flip
            beta -= (step * direction) * col
            state[enter] = AT_UPPER if state[enter] == AT_LOWER else AT_LOWER
            if step <= 1e-12:
                degenerate += 1
        else:
            step = row_lim
            if direction > 0:
                entering_value = lo[enter] + step
            else:
                entering_value = up[enter] - step
            beta -= (step * direction) * col
            leaving = basis[row]
            state[leaving] = AT_LOWER if to_lower else AT_UPPER
            beta[row] = entering_value
            basis[row] = enter
            state[enter] = BASIC
            piv = T[row, enter]
            T[row, :] /= piv
            prow = T[row, :]
            factors = T[:, enter].copy()
            factors[row] = 0.0
            T -= np.outer(factors, prow)
            T[:, enter] = 0.0
            T[row, enter] = 1.0
            f = dj[enter]
            dj -= f * prow
            dj[enter] = 0.0
            if step <= 1e-12:
                degenerate += 1
        if not bland and degenerate >= bland_after:
            bland = True


def dual_simplex_iterate(T, beta, dj, basis, state, lo, up, tol_piv, tol_feas, max_iter):
    """Bounded-variable dual simplex from a dual feasible basis.

    Leaves on the most infeasible basic variable (lowest row on ties) and
    enters by the dual ratio test (larger pivot on near ties, then lowest
    column).  Arrays are updated in place.  Returns ``(status, iterations)``.
    """
    m, ncol = T.shape
    iterations = 0
    while True:
        row = -1
        worst = tol_feas
        below = False
        for i in range(m):
            bi = basis[i]
            v = beta[i]
            if v < lo[bi] - tol_feas:
                gap = lo[bi] - v
                low = True
            elif v > up[bi] + tol_feas:
                gap = v - up[bi]
                low = False
            else:
                continue
            if gap > worst:
                worst = gap
                row = i
                below = low
        if row < 0:
            return OPTIMAL, iterations
        if iterations >= max_iter:
            return ITERATION_LIMIT, iterations
        prow = T[row]
        sgn = -1.0 if below else 1.0
        movable = (state != BASIC) & (lo != up)
        at_low = state == AT_LOWER
        signed = sgn * prow
        ok = movable & np.where(at_low, signed > tol_piv, signed < -tol_piv)
        enter = -1
        best = math.inf
        best_piv = 0.0
        for j in np.flatnonzero(ok):
            a = prow[j]
            ratio = abs(dj[j]) / abs(a)
            if enter < 0 or ratio < best - 1e-12:
                take = True
            elif ratio <= best + 1e-12:
                take = abs(a) > abs(best_piv)
            else:
                take = False
            if take:
                enter = int(j)
                best = ratio
                best_piv = a
        if enter < 0:
            return INFEASIBLE, iterations
        iterations += 1
        leaving = basis[row]
        target = lo[leaving] if below else up[leaving]
        piv = prow[enter]
        theta = (beta[row] - target) / piv
        start = lo[enter] if state[enter] == AT_LOWER else up[enter]
        col = T[:, enter].copy()
        beta -= theta * col
        beta[row] = start + theta
        state[leaving] = AT_LOWER if below else AT_UPPER
        basis[row] = enter
        state[enter] = BASIC
        T[row, :] /= piv
        prow = T[row, :]
        col[row] = 0.0
        T -= np.outer(col, prow)
        T[:, enter] = 0.0
        T[row, enter] = 1.0
        f = dj[enter]
        dj -= f * prow
        dj[enter] = 0.0
