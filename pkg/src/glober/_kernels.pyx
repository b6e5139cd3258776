# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: B-spline basis evaluation and the trend-filtering ADMM loop.

Signatures match ``glober._kernels_py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


cdef Py_ssize_t _find_interval(const double[::1] tau, double x, Py_ssize_t lo,
                               Py_ssize_t hi) noexcept nogil:
    # largest mu in [lo, hi] with tau[mu] <= x
    cdef Py_ssize_t a = lo, b = hi, mid
    if x >= tau[hi]:
        return hi
    while b - a > 1:
        mid = (a + b) // 2
        if tau[mid] <= x:
            a = mid
        else:
            b = mid
    return a


def basis_nonzero(tau, int order, x):
    cdef const double[::1] t = np.ascontiguousarray(tau, dtype=np.float64)
    cdef const double[::1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t m = order
    cdef Py_ssize_t n_basis = t.shape[0] - m
    first_arr = np.empty(n, dtype=np.intp)
    values_arr = np.zeros((n, m), dtype=np.float64)
    cdef Py_ssize_t[::1] first = first_arr
    cdef double[:, ::1] vals = values_arr
    cdef double[::1] left = np.empty(m + 1)
    cdef double[::1] right = np.empty(m + 1)
    cdef Py_ssize_t r, j, k, mu
    cdef double xv, saved, temp
    with nogil:
        for k in range(n):
            xv = xs[k]
            mu = _find_interval(t, xv, m - 1, n_basis)
            if mu > n_basis - 1:
                mu = n_basis - 1
            vals[k, 0] = 1.0
            for j in range(1, m):
                left[j] = xv - t[mu + 1 - j]
                right[j] = t[mu + j] - xv
                saved = 0.0
                for r in range(j):
                    temp = vals[k, r] / (right[r + 1] + left[j - r])
                    vals[k, r] = saved + right[r + 1] * temp
                    saved = left[j - r] * temp
                vals[k, j] = saved
            first[k] = mu - m + 1
    return first_arr, values_arr


cdef void _apply(const double[:, ::1] coef, const double[::1] b,
                 double[::1] out) noexcept nogil:
    cdef Py_ssize_t m = coef.shape[0], width = coef.shape[1], l, j
    cdef double acc
    for l in range(m):
        acc = 0.0
        for j in range(width):
            acc = acc + coef[l, j] * b[l + j]
        out[l] = acc


cdef void _apply_t(const double[:, ::1] coef, const double[::1] v,
                   double[::1] out) noexcept nogil:
    cdef Py_ssize_t m = coef.shape[0], width = coef.shape[1], l, j
    cdef Py_ssize_t n = out.shape[0]
    for l in range(n):
        out[l] = 0.0
    for l in range(m):
        for j in range(width):
            out[l + j] = out[l + j] + coef[l, j] * v[l]


cdef void _factor(const double[:, ::1] gram, double rho, double[:, ::1] chol) noexcept nogil:
    # banded Cholesky of 2I + rho*G; gram[i, d] = G[i, i - d], chol likewise for L
    cdef Py_ssize_t n = gram.shape[0], p = gram.shape[1] - 1
    cdef Py_ssize_t i, j, k, d, lo
    cdef double acc
    for i in range(n):
        lo = i - p if i >= p else 0
        for j in range(lo, i + 1):
            acc = rho * gram[i, i - j]
            if i == j:
                acc = acc + 2.0
            k = lo if lo > j - p else j - p
            while k < j:
                acc = acc - chol[i, i - k] * chol[j, j - k]
                k = k + 1
            if i == j:
                chol[i, 0] = acc ** 0.5
            else:
                chol[i, i - j] = acc / chol[j, 0]


cdef void _solve(const double[:, ::1] chol, double[::1] b) noexcept nogil:
    cdef Py_ssize_t n = chol.shape[0], p = chol.shape[1] - 1
    cdef Py_ssize_t i, k, lo, hi
    cdef double acc
    for i in range(n):
        acc = b[i]
        lo = i - p if i >= p else 0
        for k in range(lo, i):
            acc = acc - chol[i, i - k] * b[k]
        b[i] = acc / chol[i, 0]
    i = n - 1
    while i >= 0:
        acc = b[i]
        hi = i + p if i + p < n - 1 else n - 1
        for k in range(i + 1, hi + 1):
            acc = acc - chol[k, k - i] * b[k]
        b[i] = acc / chol[i, 0]
        i = i - 1


def admm_trend(y, coef, double lam, beta, z, w, double rho, long max_iter, double eps):
    cdef const double[::1] yv = y
    cdef const double[:, ::1] c = np.ascontiguousarray(coef, dtype=np.float64)
    cdef double[::1] bv = beta
    cdef double[::1] zv = z
    cdef double[::1] wv = w
    cdef Py_ssize_t n = yv.shape[0], m = c.shape[0], width = c.shape[1]
    cdef Py_ssize_t p = width - 1
    cdef Py_ssize_t i, l, a, b_, d

    gram_arr = np.zeros((n, p + 1))
    cdef double[:, ::1] gram = gram_arr
    for l in range(m):
        for a in range(width):
            for b_ in range(a + 1):
                # G[l + a, l + b_] with b_ <= a
                gram[l + a, a - b_] += c[l, a] * c[l, b_]
    cdef double[:, ::1] chol = np.zeros((n, p + 1))
    cdef double[::1] tmp_m = np.empty(m)
    cdef double[::1] db = np.empty(m)
    cdef double[::1] rhs = np.empty(n)
    cdef double[::1] s = np.empty(n)
    cdef double[::1] zold = np.empty(m)
    cdef double thresh, v, r_norm, s_norm, db_max, z_max, wt_max, eps_pri, eps_dual, rl
    cdef long it = 0
    cdef bint converged = False
    cdef bint refactor

    with nogil:
        _factor(gram, rho, chol)
        thresh = lam / rho
        while it < max_iter:
            it = it + 1
            for l in range(m):
                tmp_m[l] = zv[l] - wv[l]
            _apply_t(c, tmp_m, rhs)
            for i in range(n):
                rhs[i] = 2.0 * yv[i] + rho * rhs[i]
            _solve(chol, rhs)
            for i in range(n):
                bv[i] = rhs[i]
            _apply(c, bv, db)
            r_norm = 0.0
            db_max = 0.0
            z_max = 0.0
            for l in range(m):
                zold[l] = zv[l]
                v = db[l] + wv[l]
                if v > thresh:
                    zv[l] = v - thresh
                elif v < -thresh:
                    zv[l] = v + thresh
                else:
                    zv[l] = 0.0
                rl = db[l] - zv[l]
                wv[l] = wv[l] + rl
                if fabs(rl) > r_norm:
                    r_norm = fabs(rl)
                if fabs(db[l]) > db_max:
                    db_max = fabs(db[l])
                if fabs(zv[l]) > z_max:
                    z_max = fabs(zv[l])
                tmp_m[l] = zv[l] - zold[l]
            _apply_t(c, tmp_m, s)
            s_norm = 0.0
            for i in range(n):
                if fabs(s[i]) > s_norm:
                    s_norm = fabs(s[i])
            s_norm = rho * s_norm
            _apply_t(c, wv, s)
            wt_max = 0.0
            for i in range(n):
                if fabs(s[i]) > wt_max:
                    wt_max = fabs(s[i])
            eps_pri = eps * (1.0 + (db_max if db_max > z_max else z_max))
            eps_dual = eps * (1.0 + rho * wt_max)
            if r_norm <= eps_pri and s_norm <= eps_dual:
                converged = True
                break
            if it % 10 == 0:
                refactor = False
                if r_norm > 10.0 * s_norm:
                    rho = rho * 2.0
                    for l in range(m):
                        wv[l] = wv[l] * 0.5
                    refactor = True
                elif s_norm > 10.0 * r_norm:
                    rho = rho * 0.5
                    for l in range(m):
                        wv[l] = wv[l] * 2.0
                    refactor = True
                if refactor:
                    _factor(gram, rho, chol)
                    thresh = lam / rho
    return it, rho, bool(converged)


def diff_apply(coef, beta):
    cdef const double[:, ::1] c = np.ascontiguousarray(coef, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(beta, dtype=np.float64)
    out = np.empty(c.shape[0])
    _apply(c, b, out)
    return out


def diff_apply_t(coef, v, Py_ssize_t n):
    cdef const double[:, ::1] c = np.ascontiguousarray(coef, dtype=np.float64)
    cdef const double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    out = np.empty(n)
    _apply_t(c, vv, out)
    return out
