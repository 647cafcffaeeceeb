# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_pykernels`` for the reference versions."""
import numpy as np
cimport numpy as cnp
from libc.math cimport lgamma, log, log1p, exp, fabs, INFINITY

cnp.import_array()

DEF OPTIMAL = 0
DEF UNBOUNDED = 1
DEF ITERATION_LIMIT = 2
DEF INFEASIBLE = 3
DEF BASIC = 0
DEF AT_LOWER = 1
DEF AT_UPPER = 2


def binomial_tail_many(long n, long k, const double[::1] p):
    # one exp per point: start at the mode of the summed range and walk outwards
    # by term ratios, so no term underflows before the ones that matter
    cdef Py_ssize_t m = p.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t a
    cdef long i, mode
    cdef double pp, lp, lq, r, total, comp, term, t_mode, y, t
    cdef double lnn = lgamma(n + 1.0)
    if k <= 0:
        out_arr.fill(1.0)
        return out_arr
    if k > n:
        out_arr.fill(0.0)
        return out_arr
    for a in range(m):
        pp = p[a]
        if pp <= 0.0:
            out[a] = 0.0
            continue
        if pp >= 1.0:
            out[a] = 1.0
            continue
        lp = log(pp)
        lq = log1p(-pp)
        r = pp / (1.0 - pp)
        mode = <long>((n + 1) * pp)
        if mode < k:
            mode = k
        elif mode > n:
            mode = n
        t_mode = exp(lnn - lgamma(mode + 1.0) - lgamma(n - mode + 1.0) + mode * lp + (n - mode) * lq)
        total = t_mode
        comp = 0.0
        term = t_mode
        for i in range(mode, n):
            term *= (n - i) / (i + 1.0) * r
            if term == 0.0:
                break
            y = term - comp
            t = total + y
            comp = (t - total) - y
            total = t
        term = t_mode
        for i in range(mode, k, -1):
            term *= i / ((n - i + 1.0) * r)
            if term == 0.0:
                break
            y = term - comp
            t = total + y
            comp = (t - total) - y
            total = t
        if total > 1.0:
            total = 1.0
        elif total < 0.0:
            total = 0.0
        out[a] = total
    return out_arr


def min_mixture(const double[::1] v, const double[::1] fv,
                const double[::1] u, const double[::1] fu, double target):
    cdef Py_ssize_t a, b
    cdef Py_ssize_t best_a = -1, best_b = -1
    cdef double best = INFINITY
    cdef double gap, mm, s
    for a in range(v.shape[0]):
        for b in range(u.shape[0]):
            gap = u[b] - v[a]
            if gap <= 0.0:
                continue
            mm = (target - v[a]) / gap
            s = fv[a] + mm * (fu[b] - fv[a])
            if s < best:
                best = s
                best_a = a
                best_b = b
    return best, best_a, best_b


def simplex_iterate(double[:, ::1] T, double[::1] beta, double[::1] dj,
                    long[::1] basis, signed char[::1] state,
                    const double[::1] lo, const double[::1] up,
                    double tol_piv, double tol_dj, long max_iter,
                    long bland_after, bint bland):
    cdef Py_ssize_t m = T.shape[0]
    cdef Py_ssize_t ncol = T.shape[1]
    cdef Py_ssize_t i, j, c, enter, row, leaving
    cdef long iterations = 0
    cdef long degenerate = 0
    cdef double best_gain, gain, direction, a, lim, row_lim, row_piv
    cdef double flip, step, entering_value, piv, f, sd
    cdef bint to_lower, lower_hit, take
    cdef long bi
    while True:
        if iterations >= max_iter:
            return ITERATION_LIMIT, iterations, bland
        enter = -1
        best_gain = 0.0
        for j in range(ncol):
            if state[j] == BASIC or lo[j] == up[j]:
                continue
            if state[j] == AT_LOWER:
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

        row = -1
        row_lim = INFINITY
        row_piv = 0.0
        to_lower = True
        for i in range(m):
            a = direction * T[i, enter]
            bi = basis[i]
            if a > tol_piv:
                lim = (beta[i] - lo[bi]) / a
                lower_hit = True
            elif a < -tol_piv and up[bi] < INFINITY:
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
                    take = fabs(a) > fabs(row_piv)
            else:
                take = False
            if take:
                row = i
                row_lim = lim
                row_piv = a
                to_lower = lower_hit
        flip = up[enter] - lo[enter]
        if row < 0 and flip == INFINITY:
            return UNBOUNDED, iterations, bland
        iterations += 1
        if row < 0 or flip <= row_lim:
            step = flip
            sd = step * direction
            for i in range(m):
                beta[i] -= sd * T[i, enter]
            state[enter] = AT_UPPER if state[enter] == AT_LOWER else AT_LOWER
            if step <= 1e-12:
                degenerate += 1
        else:
            step = row_lim
            if direction > 0:
                entering_value = lo[enter] + step
            else:
                entering_value = up[enter] - step
            sd = step * direction
            for i in range(m):
                beta[i] -= sd * T[i, enter]
            leaving = basis[row]
            state[leaving] = AT_LOWER if to_lower else AT_UPPER
            beta[row] = entering_value
            basis[row] = enter
            state[enter] = BASIC
            piv = T[row, enter]
            for c in range(ncol):
                T[row, c] /= piv
            for i in range(m):
                if i == row:
                    continue
                f = T[i, enter]
                if f != 0.0:
                    for c in range(ncol):
                        T[i, c] -= f * T[row, c]
            for i in range(m):
                T[i, enter] = 0.0
            T[row, enter] = 1.0
            f = dj[enter]
            for c in range(ncol):
                dj[c] -= f * T[row, c]
            dj[enter] = 0.0
            if step <= 1e-12:
                degenerate += 1
        if not bland and degenerate >= bland_after:
            bland = True


def dual_simplex_iterate(double[:, ::1] T, double[::1] beta, double[::1] dj,
                         long[::1] basis, signed char[::1] state,
                         const double[::1] lo, const double[::1] up,
                         double tol_piv, double tol_feas, long max_iter):
    cdef Py_ssize_t m = T.shape[0]
    cdef Py_ssize_t ncol = T.shape[1]
    cdef Py_ssize_t i, j, c, row, enter
    cdef long iterations = 0
    cdef long bi, leaving
    cdef double worst, v, gap, sgn, a, ratio, best, best_piv, target, piv, theta, start, f
    cdef bint below, low, ok, take
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
        sgn = -1.0 if below else 1.0
        enter = -1
        best = INFINITY
        best_piv = 0.0
        for j in range(ncol):
            if state[j] == BASIC or lo[j] == up[j]:
                continue
            a = T[row, j]
            if state[j] == AT_LOWER:
                ok = sgn * a > tol_piv
            else:
                ok = sgn * a < -tol_piv
            if not ok:
                continue
            ratio = fabs(dj[j]) / fabs(a)
            if enter < 0 or ratio < best - 1e-12:
                take = True
            elif ratio <= best + 1e-12:
                take = fabs(a) > fabs(best_piv)
            else:
                take = False
            if take:
                enter = j
                best = ratio
                best_piv = a
        if enter < 0:
            return INFEASIBLE, iterations
        iterations += 1
        leaving = basis[row]
        target = lo[leaving] if below else up[leaving]
        piv = T[row, enter]
        theta = (beta[row] - target) / piv
        start = lo[enter] if state[enter] == AT_LOWER else up[enter]
        for i in range(m):
            beta[i] -= theta * T[i, enter]
        beta[row] = start + theta
        state[leaving] = AT_LOWER if below else AT_UPPER
        basis[row] = enter
        state[enter] = BASIC
        for c in range(ncol):
            T[row, c] /= piv
        for i in range(m):
            if i == row:
                continue
            f = T[i, enter]
            if f != 0.0:
                for c in range(ncol):
                    T[i, c] -= f * T[row, c]
        for i in range(m):
            T[i, enter] = 0.0
        T[row, enter] = 1.0
        f = dj[enter]
        for c in range(ncol):
            dj[c] -= f * T[row, c]
        dj[enter] = 0.0
