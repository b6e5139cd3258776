"""Pure-Python (numpy/scipy) versions of the hot kernels.

These mirror the signatures in ``_kernels.pyx`` exactly and are used when the
compiled extension is unavailable or ``GLOBER_PURE_PYTHON`` is set.
"""

import numpy as np
from scipy.linalg import cho_solve_banded, cholesky_banded


def basis_nonzero(tau, order, x):
    """
    Nonzero order-`order` B-spline values at each point.

    Parameters
    ----------
    tau : numpy.ndarray, shape (K + 2M,)
        Clamped knot vector.
    order : int
        Spline order M.
    x : numpy.ndarray, shape (n,)
        Points inside ``[tau[0], tau[-1]]``.

    Returns
    -------
    first : numpy.ndarray of int, shape (n,)
        Index of the first nonzero basis function for each point.
    values : numpy.ndarray, shape (n, M)
        ``values[r, j]`` is basis ``first[r] + j`` evaluated at ``x[r]``.

    """
    tau = np.asarray(tau, dtype=float)
    x = np.asarray(x, dtype=float)
    m = order
    n_basis = tau.size - m
    # last nonempty interval is closed on the right
    mu = np.searchsorted(tau, x, side='right') - 1
    np.clip(mu, m - 1, n_basis - 1, out=mu)

    n = x.size
    values = np.zeros((n, m))
    values[:, 0] = 1.0
    left = np.empty((n, m))
    right = np.empty((n, m))
    for j in range(1, m):
        left[:, j] = x - tau[mu + 1 - j]
        right[:, j] = tau[mu + j] - x
        saved = np.zeros(n)
        for r in range(j):
            temp = values[:, r] / (right[:, r + 1] + left[:, j - r])
            values[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        values[:, j] = saved
    return mu - m + 1, values


def _gram_upper_band(coef, n):
    # upper-band storage of D^T D for scipy.linalg.cholesky_banded
    m, width = coef.shape
    u = width - 1
    ab = np.zeros((u + 1, n))
    for a in range(width):
        for b in range(a, width):
            # entry (l + a, l + b) gets coef[l, a] * coef[l, b]
            prod = coef[:, a] * coef[:, b]
            cols = np.arange(m) + b
            np.add.at(ab[u - (b - a)], cols, prod)
    return ab


def diff_apply(coef, beta):
    """Banded product ``D @ beta`` with ``D[l, l + j] = coef[l, j]``."""
    m, width = coef.shape
    out = np.zeros(m)
    for j in range(width):
        out += coef[:, j] * beta[j:j + m]
    return out


def diff_apply_t(coef, v, n):
    """Banded product ``D.T @ v``."""
    m, width = coef.shape
    out = np.zeros(n)
    for j in range(width):
        out[j:j + m] += coef[:, j] * v
    return out


def admm_trend(y, coef, lam, beta, z, w, rho, max_iter, eps):
    """
    Scaled-form ADMM for ``min ||y - b||^2 + lam * ||z||_1`` s.t. ``D b = z``.

    `beta`, `z` and `w` are updated in place and act as the warm start.
    The penalty `rho` is adapted by residual balancing.

    Returns
    -------
    iterations : int
    rho : float
        Final penalty parameter.
    converged : bool

    """
    n = y.size
    gram = _gram_upper_band(coef, n)
    u = gram.shape[0] - 1

    def factor(rho_):
        ab = rho_ * gram
        ab[u] += 2.0
        return cholesky_banded(ab, lower=False)

    chol = factor(rho)
    thresh = lam / rho
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        rhs = 2.0 * y + rho * diff_apply_t(coef, z - w, n)
        beta[:] = cho_solve_banded((chol, False), rhs)
        db = diff_apply(coef, beta)
        v = db + w
        z_new = np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)
        r = db - z_new
        w += r
        s = rho * diff_apply_t(coef, z_new - z, n)
        z[:] = z_new

        r_norm = np.abs(r).max()
        s_norm = np.abs(s).max()
        eps_pri = eps * (1.0 + max(np.abs(db).max(), np.abs(z).max()))
        eps_dual = eps * (1.0 + rho * np.abs(diff_apply_t(coef, w, n)).max())
        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break
        if it % 10 == 0:
            if r_norm > 10.0 * s_norm:
                rho *= 2.0
                w *= 0.5
            elif s_norm > 10.0 * r_norm:
                rho *= 0.5
                w *= 2.0
            else:
                continue
            chol = factor(rho)
            thresh = lam / rho
    return it, rho, converged
