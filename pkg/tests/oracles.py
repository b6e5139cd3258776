"""Brute-force reference implementations used only by the tests."""

import itertools

import numpy as np
from numpy.polynomial import Polynomial


def _block_mean(v, zero_rows):
    # rows l with zero_rows[l] tie v[l] and v[l + 1] together
    out = np.empty_like(v)
    start = 0
    for l in range(v.size):
        if l == v.size - 1 or not zero_rows[l]:
            out[start:l + 1] = v[start:l + 1].mean()
            start = l + 1
    return out


def fused_lasso_oracle(y, lam):
    """
    Exact minimizer of ``||y - b||^2 + lam * sum |b[l+1] - b[l]|`` by enumeration.

    Every sign pattern ``s in {-1, 0, 1}^(n-1)`` fixes which neighbours are
    tied; the pattern's candidate is the projection of ``y - lam/2 D^T s`` onto
    piecewise-constant vectors with those ties. Each candidate is feasible and
    the true minimizer is one of them, so the best true objective wins.

    Returns
    -------
    beta : numpy.ndarray
    value : float

    """
    y = np.asarray(y, dtype=float)
    n = y.size
    best = (np.inf, None)
    for signs in itertools.product((-1.0, 0.0, 1.0), repeat=n - 1):
        s = np.array(signs)
        dts = np.zeros(n)
        dts[:-1] -= s
        dts[1:] += s
        beta = _block_mean(y - 0.5 * lam * dts, s == 0)
        value = float(np.sum((y - beta) ** 2) + lam * np.abs(np.diff(beta)).sum())
        if value < best[0]:
            best = (value, beta)
    return best[1], best[0]


def piecewise_bspline_basis(tau, order):
    """
    Polynomial pieces of every order-`order` B-spline on knot vector `tau`.

    Returns
    -------
    pieces : list of list of Polynomial
        ``pieces[i][j]`` is ``B_i`` restricted to ``[tau[j], tau[j+1])``, as a
        polynomial in the local variable ``x - tau[j]``. The local origin keeps
        the coefficients free of cancellation on short intervals.

    """
    tau = np.asarray(tau, dtype=float)
    n_int = tau.size - 1
    zero = Polynomial([0.0])
    # order 1: indicator of its own interval
    cur = [[Polynomial([1.0]) if j == i else zero for j in range(n_int)] for i in range(n_int)]
    for m in range(2, order + 1):
        nxt = []
        for i in range(tau.size - m):
            row = []
            for j in range(n_int):
                x = Polynomial([tau[j], 1.0])
                p = zero
                d1 = tau[i + m - 1] - tau[i]
                if d1 > 0:
                    p = p + (x - tau[i]) / d1 * cur[i][j]
                d2 = tau[i + m] - tau[i + 1]
                if d2 > 0:
                    p = p + (tau[i + m] - x) / d2 * cur[i + 1][j]
                row.append(p)
            nxt.append(row)
        cur = nxt
    return cur


def piecewise_design(tau, order, x):
    """Design matrix from :func:`piecewise_bspline_basis`; the right end closes the last interval."""
    tau = np.asarray(tau, dtype=float)
    pieces = piecewise_bspline_basis(tau, order)
    x = np.asarray(x, dtype=float)
    last = int(np.flatnonzero(tau < tau[-1]).max())
    out = np.zeros((x.size, len(pieces)))
    for r, v in enumerate(x):
        j = last if v >= tau[-1] else int(np.searchsorted(tau, v, side="right") - 1)
        for i, row in enumerate(pieces):
            out[r, i] = row[j](v - tau[j])
    return out
