"""Tensor-product spline fitting on full grids.

Knots are selected one dimension at a time: every slice (the other
coordinate held fixed) gets its own trend-filtering path, the k-th penalty of
every slice forms the k-th equivalent penalty, and the knots of all slices at
that entry are pooled. The final pair of entries minimizes a 2D EBIC computed
from a Kronecker-structured least-squares fit.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lstsq

from ._parallel import ordered_map
from .exceptions import OverparameterizedError, ValidationError
from .knotsel1d import (
    MIN_GAP_FACTOR,
    PathConfig,
    fit_term,
    log_binomial,
    max_coefficients,
    merge_close_knots,
    path_candidates,
    ss_floor_for,
)
from .penalty import trend_operator
from .splinekit import basis_rows, build_augmented_knots, design_matrix

GRID_ORDER_NOTE = "equivalent penalties are aligned in decreasing order along every slice grid"


@dataclass(frozen=True, eq=False)
class GridDataset:
    """
    Responses on the cartesian product ``axis1 x axis2``.

    `responses` is flat with the second index varying fastest, i.e.
    ``responses[k * n2 + l] = Y(axis1[k], axis2[l])``.
    """

    axis1: np.ndarray
    axis2: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        for name in ("axis1", "axis2", "responses"):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name} must be finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name in ("axis1", "axis2"):
            if np.any(np.diff(getattr(self, name)) <= 0):
                raise ValidationError(f"{name} must be strictly increasing")
        if self.responses.size != self.n1 * self.n2:
            raise ValidationError(
                f"expected {self.n1 * self.n2} responses for a {self.n1}x{self.n2} grid, "
                f"got {self.responses.size}"
            )

    @classmethod
    def from_matrix(cls, axis1, axis2, matrix):
        return cls(axis1, axis2, np.asarray(matrix, dtype=float).ravel())

    @property
    def n1(self):
        return self.axis1.size

    @property
    def n2(self):
        return self.axis2.size

    @property
    def n(self):
        return self.responses.size

    @property
    def matrix(self):
        """Responses as an ``n1 x n2`` matrix."""
        return self.responses.reshape(self.n1, self.n2)

    @property
    def axes(self):
        return (self.axis1, self.axis2)

    def transposed(self):
        return GridDataset.from_matrix(self.axis2, self.axis1, self.matrix.T)

    def points(self):
        """All grid points as an ``(n, 2)`` array in response order."""
        g1, g2 = np.meshgrid(self.axis1, self.axis2, indexing="ij")
        return np.column_stack([g1.ravel(), g2.ravel()])


@dataclass(frozen=True, eq=False)
class EquivalentLambdaSet:
    """
    Equivalent penalties for one dimension.

    Attributes
    ----------
    dimension : int
        1 or 2.
    s_min : int
        Shortest slice grid; every slice is truncated to it.
    tilde_lambdas : numpy.ndarray, shape (s_min, n_slices)
        Row ``k`` holds the k-th penalty of every slice.
    pooled_knots : list of numpy.ndarray
        Sorted, deduplicated union of the slices' knots for each entry.
    slice_counts : numpy.ndarray, shape (s_min, n_slices)
        Knot count of every slice at every entry.

    """

    dimension: int
    s_min: int
    tilde_lambdas: np.ndarray
    pooled_knots: list
    slice_counts: np.ndarray

    def __len__(self):
        return self.s_min


@dataclass(frozen=True, eq=False)
class FittedTensorModel:
    """
    Tensor-product spline ``sum gamma[i, j, ...] B_i(x1) B_j(x2) ...``.

    Attributes
    ----------
    knots : tuple of AugmentedKnotVector
        One per dimension.
    gamma : numpy.ndarray
        Coefficients with shape ``(Q1, Q2, ...)``.
    q : int
    ebic : float
    ss : float
    selected : tuple of int
        Chosen equivalent-penalty entry per dimension (None when knots were given).
    lambdas : tuple
        Penalty vectors of the chosen entries.
    log : tuple of str
        Fit diagnostics (skipped cells, alignment conventions, cluster reports).

    """

    knots: tuple
    gamma: np.ndarray
    q: int
    ebic: float
    ss: float
    n_obs: int
    selected: tuple | None = None
    lambdas: tuple = ()
    rank_deficient: bool = False
    log: tuple = field(default=(), compare=False)

    @property
    def dims(self):
        return len(self.knots)

    @property
    def knots1(self):
        return self.knots[0]

    @property
    def knots2(self):
        return self.knots[1]

    @property
    def n_knots(self):
        return tuple(k.n_interior for k in self.knots)

    @property
    def n_coef(self):
        return int(self.gamma.size)

    @property
    def bounds(self):
        return tuple(k.bounds for k in self.knots)

    def predict(self, points):
        return predict_tensor(self, points)


def predict_tensor(model, points):
    """
    Evaluate a tensor-product model at the rows of `points` (shape ``(n, d)``).

    Each row costs ``M**d`` multiply-adds: only the nonzero basis values per
    dimension are combined, no full design row is formed.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :] if pts.size == model.dims else pts[:, None]
    if pts.shape[1] != model.dims:
        raise ValidationError(f"expected {model.dims} coordinates per point, got {pts.shape[1]}")
    rows = [basis_rows(kv, pts[:, j]) for j, kv in enumerate(model.knots)]
    out = np.zeros(pts.shape[0])
    orders = [kv.order for kv in model.knots]
    for offsets in itertools.product(*(range(m) for m in orders)):
        weight = np.ones(pts.shape[0])
        index = []
        for (first, values), a in zip(rows, offsets):
            weight = weight * values[:, a]
            index.append(first + a)
        out += weight * model.gamma[tuple(index)]
    return out


def predict_2d(model, x1, x2):
    """Evaluate a 2D model; scalar coordinates give a scalar."""
    scalar = np.ndim(x1) == 0 and np.ndim(x2) == 0
    x1, x2 = np.broadcast_arrays(np.atleast_1d(np.asarray(x1, dtype=float)),
                                 np.atleast_1d(np.asarray(x2, dtype=float)))
    vals = predict_tensor(model, np.column_stack([x1.ravel(), x2.ravel()])).reshape(x1.shape)
    return float(vals[0]) if scalar else vals


def _pool_knots(sets, span):
    if not sets:
        return np.zeros(0)
    allk = np.unique(np.concatenate(sets)) if sets else np.zeros(0)
    if allk.size == 0:
        return allk
    return merge_close_knots(allk, np.ones(allk.size), span * MIN_GAP_FACTOR,
                             (-np.inf, np.inf))


def pool_candidates(slice_candidates, dimension, span):
    """
    Align slice candidate lists by entry and pool their knots.

    `slice_candidates` holds, per slice, its SelectedKnots in decreasing
    penalty order. Entry ``k`` of the result collects the k-th element of
    every slice.
    """
    if not slice_candidates:
        raise ValidationError("no slices to pool")
    s_min = min(len(c) for c in slice_candidates)
    if s_min == 0:
        raise ValidationError("a slice produced an empty penalty grid")
    lams = np.array([[c[k].lam for c in slice_candidates] for k in range(s_min)])
    counts = np.array([[c[k].count for c in slice_candidates] for k in range(s_min)])
    pooled = [_pool_knots([c[k].knots for c in slice_candidates], span) for k in range(s_min)]
    for arr in (lams, counts, *pooled):
        arr.setflags(write=False)
    return EquivalentLambdaSet(int(dimension), int(s_min), lams, pooled, counts)


def per_dimension_paths(data, dim, q=2, config=None, bounds=None, threads=None):
    """
    Run one trend-filtering path per slice along dimension `dim` (1 or 2) and pool.

    Every slice shares the same abscissae, so the difference operator is
    built once.
    """
    config = config or PathConfig()
    if dim not in (1, 2):
        raise ValidationError(f"dim must be 1 or 2, got {dim}")
    x = data.axes[dim - 1]
    if x.size < q + 2:
        raise ValidationError(f"dimension {dim} has {x.size} points; need at least q + 2 = {q + 2}")
    ymat = data.matrix if dim == 1 else data.matrix.T
    if bounds is None:
        bounds = (x[0], x[-1])
    op = trend_operator(x, q, config.weighting)

    def run(i):
        _, cands = path_candidates(np.ascontiguousarray(ymat[:, i]), x, q, config, bounds, op)
        return cands

    slices = ordered_map(run, range(ymat.shape[1]), threads)
    return pool_candidates(slices, dim, bounds[1] - bounds[0])


def kron_least_squares(b1, b2, ymat):
    """
    Minimum-norm solution of ``min ||vec(Y) - (B1 kron B2) vec(G)||``.

    Uses ``pinv(B1 kron B2) = pinv(B1) kron pinv(B2)``, so
    ``G = pinv(B1) Y pinv(B2).T`` with two small pivoted factorizations.

    Returns
    -------
    gamma : numpy.ndarray, shape (Q1, Q2)
    rank_deficient : bool

    """
    g1, _, r1, _ = lstsq(b1, ymat, lapack_driver="gelsy")
    g2, _, r2, _ = lstsq(b2, g1.T, lapack_driver="gelsy")
    return g2.T, bool(r1 < b1.shape[1] or r2 < b2.shape[1])


def tensor_ebic(ss, n, q_dims, n_coef, axis_sizes, kind="loglik", ss_floor=0.0):
    """
    EBIC of a tensor model with `n_coef` coefficients.

    ``fit + n_coef log n + 2 log C(prod_j (q + n_j + 1), n_coef)``.
    """
    top = math.prod(q_dims + m + 1 for m in axis_sizes)
    return fit_term(ss, n, kind, ss_floor) + n_coef * np.log(n) + 2.0 * log_binomial(top, n_coef)


@dataclass(frozen=True, eq=False)
class CellFit:
    """Least-squares result for one pair of knot sets."""

    ebic: float
    gamma: np.ndarray
    ss: float
    rank_deficient: bool


def ebic_2d(data, knots1, knots2, q=2, bounds=None, kind="loglik"):
    """
    Fit the tensor spline with the given interior knots and score it.

    Raises
    ------
    OverparameterizedError
        If ``Q1 * Q2`` exceeds :func:`~glober.knotsel1d.max_coefficients`.

    """
    bounds = bounds or ((data.axis1[0], data.axis1[-1]), (data.axis2[0], data.axis2[-1]))
    kv1 = build_augmented_knots(knots1, q + 1, bounds[0])
    kv2 = build_augmented_knots(knots2, q + 1, bounds[1])
    n_coef = kv1.n_basis * kv2.n_basis
    if n_coef > max_coefficients(data.n, kind):
        raise OverparameterizedError(f"{n_coef} coefficients for {data.n} observations")
    b1 = design_matrix(kv1, data.axis1)
    b2 = design_matrix(kv2, data.axis2)
    ymat = data.matrix
    gamma, deficient = kron_least_squares(b1, b2, ymat)
    ss = float(np.sum((ymat - b1 @ gamma @ b2.T) ** 2))
    score = tensor_ebic(ss, data.n, q, n_coef, (data.n1, data.n2), kind,
                        ss_floor_for(data.responses))
    gamma.setflags(write=False)
    return CellFit(float(score), gamma, ss, deficient)


@dataclass(frozen=True, eq=False)
class Selection2D:
    """
    Every scored cell of a 2D fit.

    Attributes
    ----------
    sets : tuple of EquivalentLambdaSet
    cells : dict
        ``(k1, k2) -> CellFit``, or None for skipped cells. Cells with the same
        pooled knots share one CellFit.
    best : tuple of int
    model : FittedTensorModel

    """

    sets: tuple
    cells: dict
    best: tuple
    model: FittedTensorModel
    bounds: tuple

    def cell_model(self, cell):
        """Model for any scored cell."""
        fit = self.cells[cell]
        if fit is None:
            raise OverparameterizedError(f"cell {cell} was skipped")
        kvs = tuple(build_augmented_knots(s.pooled_knots[k], self.model.q + 1, b)
                    for s, k, b in zip(self.sets, cell, self.bounds))
        return FittedTensorModel(kvs, fit.gamma, self.model.q, fit.ebic, fit.ss,
                                 self.model.n_obs, tuple(cell),
                                 tuple(s.tilde_lambdas[k] for s, k in zip(self.sets, cell)),
                                 fit.rank_deficient)


def select_2d(data, q=2, config=None, bounds=None, threads=None):
    """
    Score all pairs of equivalent-penalty entries and pick the EBIC minimizer.

    Pairs with identical pooled knot sets are fitted once. Pairs with more
    coefficients than observations are skipped and logged. Ties go to fewer
    coefficients, then to the stronger first-dimension penalty.
    """
    config = config or PathConfig()
    bounds = bounds or ((data.axis1[0], data.axis1[-1]), (data.axis2[0], data.axis2[-1]))
    sets = tuple(per_dimension_paths(data, d, q, config, bounds[d - 1], threads) for d in (1, 2))
    log = [GRID_ORDER_NOTE]
    log += [f"dimension {s.dimension}: s_min={s.s_min} over {s.tilde_lambdas.shape[1]} slices"
            for s in sets]
    best = None
    cache = {}
    cells = {}
    skipped = 0
    for k1, k2 in itertools.product(range(sets[0].s_min), range(sets[1].s_min)):
        t1, t2 = sets[0].pooled_knots[k1], sets[1].pooled_knots[k2]
        key = (t1.tobytes(), t2.tobytes())
        if key not in cache:
            try:
                cache[key] = ebic_2d(data, t1, t2, q, bounds, config.ebic_fit)
            except OverparameterizedError:
                cache[key] = None
        cell = cells[(k1, k2)] = cache[key]
        if cell is None:
            skipped += 1
            continue
        rank = (cell.ebic, cell.gamma.size, k1, k2)
        if best is None or rank < best[0]:
            best = (rank, cell, t1, t2)
    if skipped:
        log.append(f"skipped {skipped} overparameterized cells")
    if best is None:
        raise OverparameterizedError("every knot-set combination has more coefficients than data")
    (_, _, k1, k2), cell, t1, t2 = best
    kv1 = build_augmented_knots(t1, q + 1, bounds[0])
    kv2 = build_augmented_knots(t2, q + 1, bounds[1])
    model = FittedTensorModel(
        (kv1, kv2), cell.gamma, int(q), cell.ebic, cell.ss, data.n, (k1, k2),
        (sets[0].tilde_lambdas[k1], sets[1].tilde_lambdas[k2]), cell.rank_deficient, tuple(log),
    )
    return Selection2D(sets, cells, (k1, k2), model, tuple(bounds))


def fit_2d(data, q=2, config=None, bounds=None, threads=None):
    """EBIC-selected tensor spline on grid data (see :func:`select_2d`)."""
    return select_2d(data, q, config, bounds, threads).model


def grid_values(model, axes):
    """
    Evaluate a tensor model on the full cartesian product of `axes`.

    The result has shape ``(len(axes[0]), len(axes[1]), ...)`` and is built by
    contracting one univariate design matrix at a time.
    """
    if len(axes) != model.dims:
        raise ValidationError(f"expected {model.dims} axes, got {len(axes)}")
    out = np.asarray(model.gamma)
    for kv, ax in zip(model.knots, axes):
        b = design_matrix(kv, np.asarray(ax, dtype=float))
        # contract the leading coefficient axis; the evaluated axis goes last
        out = np.tensordot(out, b, axes=([0], [1]))
    return out


def fit_2d_knots(data, knots1, knots2, q=2, bounds=None, kind="loglik"):
    """Tensor fit with given interior knots (no selection)."""
    bounds = bounds or ((data.axis1[0], data.axis1[-1]), (data.axis2[0], data.axis2[-1]))
    cell = ebic_2d(data, knots1, knots2, q, bounds, kind)
    kv1 = build_augmented_knots(knots1, q + 1, bounds[0])
    kv2 = build_augmented_knots(knots2, q + 1, bounds[1])
    return FittedTensorModel((kv1, kv2), cell.gamma, int(q), cell.ebic, cell.ss, data.n,
                             rank_deficient=cell.rank_deficient)
