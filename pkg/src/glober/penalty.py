"""Discrete difference operators used as trend-filtering penalties.

Operators are stored by their band: row ``l`` of an ``m x n`` operator has its
nonzeros in columns ``l .. l + width - 1``, kept in ``coef[l, :]``.
"""

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from ._backend import kernels
from .exceptions import ValidationError

WEIGHTINGS = ("divided", "gaps")


@dataclass(frozen=True, eq=False)
class DifferenceOperator:
    """
    Banded difference operator of a given differentiation order.

    Attributes
    ----------
    order : int
        Differentiation order ``q + 1``.
    coef : numpy.ndarray, shape (n - order, order + 1)
        Band coefficients.
    n : int
        Number of columns.
    points : numpy.ndarray or None
        Abscissae the operator was built on (None for unweighted operators).
    weighted : bool
        True for spacing-aware operators, False for plain integer differences.

    """

    order: int
    coef: np.ndarray
    n: int
    points: np.ndarray | None = None
    weighted: bool = False

    @property
    def shape(self):
        return (self.coef.shape[0], self.n)

    @property
    def n_rows(self):
        return self.coef.shape[0]

    @property
    def row_norms(self):
        """l1 norm of every row."""
        return np.abs(self.coef).sum(axis=1)

    def apply(self, beta):
        """Return ``D @ beta``."""
        beta = np.ascontiguousarray(beta, dtype=float)
        if beta.shape != (self.n,):
            raise ValidationError(f"expected vector of length {self.n}, got {beta.shape}")
        return kernels.diff_apply(self.coef, beta)

    def apply_t(self, v):
        """Return ``D.T @ v``."""
        v = np.ascontiguousarray(v, dtype=float)
        return kernels.diff_apply_t(self.coef, v, self.n)

    def sparse(self):
        m, width = self.coef.shape
        rows = np.repeat(np.arange(m), width)
        cols = (np.arange(m)[:, None] + np.arange(width)).ravel()
        return sparse.csr_matrix((self.coef.ravel(), (rows, cols)), shape=self.shape)

    def todense(self):
        return self.sparse().toarray()

    def __matmul__(self, other):
        other = np.asarray(other)
        if other.ndim == 1:
            return self.apply(other)
        return self.sparse() @ other


def _freeze(arr):
    arr.setflags(write=False)
    return arr


def _difference_step(coef):
    # band of D0 @ D for D given by `coef`
    m, width = coef.shape
    out = np.zeros((m - 1, width + 1))
    out[:, 1:] += coef[1:]
    out[:, :-1] -= coef[:-1]
    return out


def fused_difference(n):
    """First-difference matrix ``(n - 1) x n`` with rows ``(-1, 1)``."""
    if n < 2:
        raise ValidationError(f"fused difference needs n >= 2, got {n}")
    coef = np.tile([-1.0, 1.0], (n - 1, 1))
    return DifferenceOperator(1, _freeze(coef), int(n))


def integer_difference(n, order):
    """Unweighted difference operator of `order`, i.e. ``D0`` applied `order` times."""
    if order < 1 or n < order + 1:
        raise ValidationError(f"need order >= 1 and n >= order + 1, got n={n}, order={order}")
    coef = np.ones((n, 1))
    for _ in range(order):
        coef = _difference_step(coef)
    return DifferenceOperator(int(order), _freeze(coef), int(n))


def trend_operator(points, q, weighting="divided"):
    """
    Spacing-aware difference operator of order ``q + 1`` on `points`.

    Built recursively as ``W_k @ D0 @ Delta^(k-1)``, starting from the identity.
    With ``weighting="divided"`` (default) the level-``k`` weights are
    ``k / (x[l + k] - x[l])``, i.e. scaled divided differences; the result
    annihilates every polynomial of degree ``<= q`` on any grid. With
    ``weighting="gaps"`` the weights are the reciprocal consecutive gaps
    ``1 / (x[l + k] - x[l + k - 1])``, which only annihilates such
    polynomials on evenly spaced points. Both reduce to
    ``h**-(q+1) * integer_difference(n, q + 1)`` on an even grid of step ``h``.
    """
    x = np.asarray(points, dtype=float).ravel()
    if weighting not in WEIGHTINGS:
        raise ValidationError(f"weighting must be one of {WEIGHTINGS}, got {weighting!r}")
    if q < 0 or int(q) != q:
        raise ValidationError(f"q must be a non-negative integer, got {q}")
    n = x.size
    if n < q + 2:
        raise ValidationError(f"need at least q + 2 = {q + 2} points, got {n}")
    if np.any(np.diff(x) <= 0):
        raise ValidationError("points must be strictly increasing")
    coef = np.ones((n, 1))
    for k in range(1, q + 2):
        coef = _difference_step(coef)
        rows = np.arange(n - k)
        if weighting == "divided":
            w = k / (x[rows + k] - x[rows])
        else:
            w = 1.0 / (x[rows + k] - x[rows + k - 1])
        coef *= w[:, None]
    return DifferenceOperator(q + 1, _freeze(coef), n, _freeze(x.copy()), True)
