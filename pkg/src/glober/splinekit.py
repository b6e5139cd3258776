"""Clamped B-spline bases: knot vectors, basis evaluation and design matrices."""

from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .exceptions import DomainError, KnotBoundsError, KnotOrderError, SplineOrderError


@dataclass(frozen=True, eq=False)
class AugmentedKnotVector:
    """
    Clamped knot sequence with `order`-fold boundary knots.

    Attributes
    ----------
    interior : numpy.ndarray, shape (K,)
        Strictly increasing interior knots, all inside ``(lower, upper)``.
    order : int
        Spline order M (degree M - 1).
    lower, upper : float
        Domain bounds.
    augmented : numpy.ndarray, shape (K + 2M,)
        ``(lower,)*M + interior + (upper,)*M``.

    """

    interior: np.ndarray
    order: int
    lower: float
    upper: float
    augmented: np.ndarray

    @property
    def n_interior(self):
        return self.interior.size

    @property
    def n_basis(self):
        """Number of order-M basis functions, ``K + M``."""
        return self.interior.size + self.order

    @property
    def bounds(self):
        return (self.lower, self.upper)

    def __eq__(self, other):
        if not isinstance(other, AugmentedKnotVector):
            return NotImplemented
        return (
            self.order == other.order
            and self.lower == other.lower
            and self.upper == other.upper
            and np.array_equal(self.interior, other.interior)
        )

    def __hash__(self):
        return hash((self.order, self.lower, self.upper, self.interior.tobytes()))


def build_augmented_knots(interior, order, bounds):
    """
    Build the clamped knot vector for `interior` knots on ``[x_min, x_max]``.

    Raises
    ------
    SplineOrderError
        If ``order < 1``.
    KnotOrderError
        If the interior knots are not strictly increasing.
    KnotBoundsError
        If an interior knot is not strictly inside the bounds, or the bounds
        are not increasing.

    """
    if int(order) != order or order < 1:
        raise SplineOrderError(f"spline order must be an integer >= 1, got {order}")
    order = int(order)
    lower, upper = float(bounds[0]), float(bounds[1])
    if not lower < upper:
        raise KnotBoundsError(f"lower bound {lower} must be below upper bound {upper}")
    t = np.asarray(interior, dtype=float).ravel()
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise KnotOrderError("interior knots must be strictly increasing")
    if t.size and (t[0] <= lower or t[-1] >= upper):
        raise KnotBoundsError(
            f"interior knots must lie strictly inside ({lower}, {upper})"
        )
    tau = np.concatenate([np.full(order, lower), t, np.full(order, upper)])
    t = t.copy()
    t.setflags(write=False)
    tau.setflags(write=False)
    return AugmentedKnotVector(t, order, lower, upper, tau)


def _check_domain(knots, x):
    x = np.asarray(x, dtype=float)
    bad = (x < knots.lower) | (x > knots.upper) | ~np.isfinite(x)
    if np.any(bad):
        idx = np.flatnonzero(np.atleast_1d(bad))
        raise DomainError(
            f"{idx.size} point(s) outside [{knots.lower}, {knots.upper}], "
            f"first at index {idx[0]}"
        )
    return x


def eval_bspline(knots, i, m, x):
    """
    Evaluate ``B_{i,m}(x)`` by the Cox-de Boor recursion.

    This is the direct (exponential-cost) recursion and is meant for checking
    and small evaluations; use :func:`design_matrix` for bulk work. Indices are
    0-based: ``0 <= i < K + 2M - m``. Coincident-knot terms with a zero
    denominator are taken as 0, and the last nonempty interval is closed at
    the upper bound.
    """
    tau = knots.augmented
    if not 1 <= m <= knots.order:
        raise SplineOrderError(f"order m must be in [1, {knots.order}], got {m}")
    if not 0 <= i < tau.size - m:
        raise IndexError(f"basis index {i} out of range for order {m}")
    x = float(_check_domain(knots, x))
    # index of the interval closed on the right at x_max
    last = tau.size - knots.order - 1

    def rec(j, k):
        if k == 1:
            if tau[j] <= x < tau[j + 1]:
                return 1.0
            if x == knots.upper and j == last:
                return 1.0
            return 0.0
        out = 0.0
        den = tau[j + k - 1] - tau[j]
        if den > 0:
            out += (x - tau[j]) / den * rec(j, k - 1)
        den = tau[j + k] - tau[j + 1]
        if den > 0:
            out += (tau[j + k] - x) / den * rec(j + 1, k - 1)
        return out

    return rec(i, m)


def basis_rows(knots, points):
    """
    Compact design rows: first nonzero column and the M nonzero values per point.

    Returns
    -------
    first : numpy.ndarray of int, shape (n,)
    values : numpy.ndarray, shape (n, M)

    """
    x = np.ascontiguousarray(_check_domain(knots, np.atleast_1d(points)), dtype=float)
    return kernels.basis_nonzero(knots.augmented, knots.order, x)


def design_matrix(knots, points):
    """
    Dense ``n x (K + M)`` matrix with entry ``[r, c] = B_{c,M}(points[r])``.

    Raises
    ------
    DomainError
        If any point lies outside the knot bounds.

    """
    first, values = basis_rows(knots, points)
    n, m = values.shape
    out = np.zeros((n, knots.n_basis))
    cols = first[:, None] + np.arange(m)
    out[np.arange(n)[:, None], cols] = values
    return out


def tensor_design_matrix(b1, b2):
    """Kronecker product ``b1 (x) b2``; the second factor's row index varies fastest."""
    b1 = np.asarray(b1, dtype=float)
    b2 = np.asarray(b2, dtype=float)
    if b1.ndim != 2 or b2.ndim != 2:
        raise ValueError("design factors must be 2-D matrices")
    return np.kron(b1, b2)


def spline_values(knots, coef, points):
    """Evaluate ``sum_c coef[c] * B_{c,M}`` at `points`."""
    coef = np.asarray(coef, dtype=float)
    first, values = basis_rows(knots, points)
    cols = first[:, None] + np.arange(values.shape[1])
    return np.einsum("ij,ij->i", values, coef[cols])
