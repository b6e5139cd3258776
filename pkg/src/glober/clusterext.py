"""Knot selection for scattered d-dimensional data via clustering.

For each dimension ``j`` the observations are grouped by k-means on the other
coordinates. Each group is treated as a noisy 1D slice along ``j``. The knots
found in all groups at the same equivalent-penalty entry are pooled, and the
pooled set is reduced to one representative (median) per knot cluster. The
number of knot clusters is picked at the elbow of the within-cluster sum of
squares. A d-dimensional EBIC then picks one entry per dimension.
"""

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lstsq

from ._parallel import ordered_map
from .exceptions import OverparameterizedError, ValidationError
from .knotsel1d import PathConfig, max_coefficients, path_candidates, ss_floor_for
from .penalty import trend_operator
from .splinekit import basis_rows, build_augmented_knots
from .tensorfit import FittedTensorModel, GRID_ORDER_NOTE, pool_candidates, tensor_ebic

KMEANS_MAX_ITER = 100
POINTS_PER_CLUSTER = 25
MAX_KNOT_CLUSTERS = 15
MAX_EXHAUSTIVE_CELLS = 2500


@dataclass(frozen=True, eq=False)
class ScatteredDataset:
    """
    Observations at arbitrary points of ``R^d``.

    Attributes
    ----------
    points : numpy.ndarray, shape (n, d)
    responses : numpy.ndarray, shape (n,)

    """

    points: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        y = np.array(self.responses, dtype=float).ravel()
        if pts.ndim != 2 or pts.shape[1] < 2:
            raise ValidationError("scattered data needs an (n, d) point array with d >= 2")
        if pts.shape[0] != y.size:
            raise ValidationError(f"{pts.shape[0]} points but {y.size} responses")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(y))):
            raise ValidationError("points and responses must be finite")
        if pts.shape[0] < POINTS_PER_CLUSTER:
            raise ValidationError(f"need at least {POINTS_PER_CLUSTER} observations")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValidationError("duplicate points are not allowed")
        pts.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "responses", y)

    @property
    def n(self):
        return self.responses.size

    @property
    def d(self):
        return self.points.shape[1]

    def bounds(self):
        return tuple((float(c.min()), float(c.max())) for c in self.points.T)


@dataclass(frozen=True, eq=False)
class KnotClusterSummary:
    """
    Knot clustering result for one dimension at one equivalent-penalty entry.

    Attributes
    ----------
    dimension : int
        1-based dimension index.
    raw_knots : numpy.ndarray
        Pooled knots (a multiset) from every point cluster.
    cluster_count : int
    representatives : numpy.ndarray
        Median of every knot cluster, strictly increasing.
    wss_curve : numpy.ndarray
        Within-cluster sum of squares for ``c = 1, 2, ...``.

    """

    dimension: int
    raw_knots: np.ndarray
    cluster_count: int
    representatives: np.ndarray
    wss_curve: np.ndarray


@dataclass(frozen=True, eq=False)
class DimensionCandidates:
    """Per-entry knot summaries for one dimension plus diagnostics."""

    dimension: int
    entries: list
    skipped_clusters: int
    n_clusters: int

    @property
    def knot_sets(self):
        return [e.representatives for e in self.entries]


def default_k(n):
    """Number of point clusters, about 25 points each."""
    return max(1, n // POINTS_PER_CLUSTER)


def _farthest_point_seeds(x, k, rng):
    n = x.shape[0]
    centers = [int(rng.integers(n))]
    dist = np.sum((x - x[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        nxt = int(np.argmax(dist))
        centers.append(nxt)
        dist = np.minimum(dist, np.sum((x - x[nxt]) ** 2, axis=1))
    return x[centers].copy()


def _assign(x, centers):
    d2 = (np.sum(x ** 2, axis=1)[:, None] - 2.0 * x @ centers.T
          + np.sum(centers ** 2, axis=1)[None, :])
    labels = np.argmin(d2, axis=1)
    best = np.maximum(d2[np.arange(x.shape[0]), labels], 0.0)
    return labels, best


def kmeans(points, k=None, seed=0, max_iter=KMEANS_MAX_ITER):
    """
    Lloyd's k-means with greedy farthest-point seeding.

    The first center is drawn with `seed`, the others are the points farthest
    from the centers so far. A cluster that empties is re-seeded at the point
    farthest from its current center.

    Parameters
    ----------
    points : array_like, shape (n,) or (n, p)
    k : int, optional
        Defaults to ``n // 25`` (at least 1).

    Returns
    -------
    labels : numpy.ndarray of int, shape (n,)
    centers : numpy.ndarray, shape (k, p)

    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    k = default_k(n) if k is None else int(k)
    if not 1 <= k <= n:
        raise ValidationError(f"k must be in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    centers = _farthest_point_seeds(x, k, rng)
    labels = None
    for _ in range(max_iter):
        new, dist = _assign(x, centers)
        for c in range(k):
            if not np.any(new == c):
                far = int(np.argmax(dist))
                new[far] = c
                dist[far] = 0.0
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            centers[c] = x[labels == c].mean(axis=0)
    return labels, centers


def elbow(wss_curve):
    """
    Cluster count at the largest discrete curvature of `wss_curve`.

    ``wss_curve[c - 1]`` is the cost with ``c`` clusters. Returns the ``c``
    maximizing ``wss[c-1] - 2 wss[c] + wss[c+1]``, the smallest on ties, or 1
    when the curve has fewer than three points.

    Examples
    --------
    >>> elbow([100, 10, 9, 8.5])
    2
    >>> elbow([50, 40, 5, 4, 3.8])
    3
    """
    w = np.asarray(wss_curve, dtype=float)
    if w.size < 3:
        return 1
    curv = w[:-2] - 2.0 * w[1:-1] + w[2:]
    return int(np.argmax(curv)) + 2


def _dp_table(s, c_max):
    # dp[g, j]: best wss of s[:j] in g clusters; arg[g, j]: start of the last one
    n = s.size
    p1 = np.concatenate([[0.0], np.cumsum(s)])
    p2 = np.concatenate([[0.0], np.cumsum(s * s)])
    i = np.arange(n + 1)[:, None]
    j = np.arange(n + 1)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        tot = p1[j] - p1[i]
        cost = np.maximum(p2[j] - p2[i] - tot * tot / (j - i), 0.0)
    cost[i >= j] = np.inf
    dp = np.full((c_max + 1, n + 1), np.inf)
    arg = np.zeros((c_max + 1, n + 1), dtype=int)
    dp[0, 0] = 0.0
    for g in range(1, c_max + 1):
        tot = dp[g - 1][:, None] + cost
        arg[g] = np.argmin(tot, axis=0)
        dp[g] = tot[arg[g], np.arange(n + 1)]
    return dp, arg


def _backtrack(arg, n, c):
    labels = np.zeros(n, dtype=int)
    end = n
    for g in range(c, 0, -1):
        start = arg[g, end]
        labels[start:end] = g - 1
        end = start
    return labels


def kmeans_1d_exact(values, c):
    """
    Globally optimal 1D k-means by dynamic programming over sorted values.

    Returns
    -------
    labels : numpy.ndarray of int
        Cluster of each value (in the input order), numbered left to right.
    wss : float

    """
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if not 1 <= c <= n:
        raise ValidationError(f"cluster count must be in [1, {n}], got {c}")
    order = np.argsort(v, kind="stable")
    dp, arg = _dp_table(v[order], c)
    labels = np.empty(n, dtype=int)
    labels[order] = _backtrack(arg, n, c)
    return labels, float(dp[c, n])


def cluster_knots(raw_knots, dimension=1, max_clusters=MAX_KNOT_CLUSTERS):
    """
    Reduce a pooled knot multiset to medians of its clusters.

    Candidate counts run from 1 to ``min(max_clusters, #distinct values)``;
    the count is picked by :func:`elbow`.
    """
    raw = np.sort(np.asarray(raw_knots, dtype=float).ravel())
    if raw.size == 0:
        empty = np.zeros(0)
        return KnotClusterSummary(dimension, raw, 0, empty, empty)
    top = min(max_clusters, np.unique(raw).size)
    dp, arg = _dp_table(raw, top)
    wss = dp[1:, raw.size].copy()
    count = elbow(wss)
    labels = _backtrack(arg, raw.size, count)
    reps = np.unique([np.median(raw[labels == g]) for g in range(count)])
    for arr in (raw, reps, wss):
        arr.setflags(write=False)
    return KnotClusterSummary(dimension, raw, int(reps.size), reps, wss)


def knots_per_dimension(data, j, q=2, config=None, seed=0, k=None, bounds=None, threads=None):
    """
    Candidate knot sets along dimension `j` (0-based) for every equivalent-penalty entry.

    Points are clustered on the coordinates other than `j`. Every cluster
    with at least ``q + 2`` distinct values along `j` runs a 1D path on its
    responses (averaged over repeated coordinates); smaller clusters are
    skipped and counted. Cluster paths are aligned by entry
    (truncated to the shortest), pooled, and reduced by :func:`cluster_knots`.
    """
    config = config or PathConfig()
    if not 0 <= j < data.d:
        raise ValidationError(f"dimension {j} out of range for d={data.d}")
    others = np.delete(data.points, j, axis=1)
    labels, _ = kmeans(others, default_k(data.n) if k is None else k, seed)
    if bounds is None:
        bounds = (float(data.points[:, j].min()), float(data.points[:, j].max()))
    groups = []
    skipped = 0
    for c in range(int(labels.max()) + 1):
        idx = np.flatnonzero(labels == c)
        xj, inverse = np.unique(data.points[idx, j], return_inverse=True)
        if xj.size < q + 2:
            skipped += 1
            continue
        # repeated coordinates along j are merged by averaging their responses
        yj = np.bincount(inverse, data.responses[idx]) / np.bincount(inverse)
        groups.append((xj, yj))
    if not groups:
        raise ValidationError(f"every cluster along dimension {j} is too small for q={q}")

    def run(group):
        x, y = group
        op = trend_operator(x, q, config.weighting)
        _, cands = path_candidates(y, x, q, config, bounds, op)
        return cands

    per_cluster = ordered_map(run, groups, threads)
    span = bounds[1] - bounds[0]
    pooled = pool_candidates(per_cluster, j + 1, span)
    entries = []
    for kk in range(pooled.s_min):
        raw = np.concatenate([c[kk].knots for c in per_cluster])
        entries.append(cluster_knots(raw, j + 1))
    return DimensionCandidates(j + 1, entries, skipped, len(groups) + skipped)


def _pointwise_design(knots, points):
    """Dense design with columns ordered like ``gamma.ravel()`` (last dimension fastest)."""
    n = points.shape[0]
    shape = tuple(kv.n_basis for kv in knots)
    design = np.zeros((n, int(np.prod(shape))))
    rows = [basis_rows(kv, points[:, j]) for j, kv in enumerate(knots)]
    strides = np.cumprod((1,) + shape[::-1])[:-1][::-1]
    for offsets in itertools.product(*(range(kv.order) for kv in knots)):
        weight = np.ones(n)
        col = np.zeros(n, dtype=int)
        for (first, values), a, st in zip(rows, offsets, strides):
            weight = weight * values[:, a]
            col = col + (first + a) * st
        np.add.at(design, (np.arange(n), col), weight)
    return design


@dataclass(frozen=True, eq=False)
class ScatteredFit:
    ebic: float
    gamma: np.ndarray
    ss: float
    rank_deficient: bool


def ebic_nd(data, knot_sets, q=2, bounds=None, kind="loglik"):
    """
    Fit a tensor spline by point-wise least squares and return its EBIC.

    Raises
    ------
    OverparameterizedError
        If the coefficient count exceeds :func:`~glober.knotsel1d.max_coefficients`.

    """
    bounds = bounds or data.bounds()
    kvs = [build_augmented_knots(t, q + 1, b) for t, b in zip(knot_sets, bounds)]
    shape = tuple(kv.n_basis for kv in kvs)
    n_coef = int(np.prod(shape))
    if n_coef > max_coefficients(data.n, kind):
        raise OverparameterizedError(f"{n_coef} coefficients for {data.n} observations")
    design = _pointwise_design(kvs, data.points)
    gamma, _, rank, _ = lstsq(design, data.responses, lapack_driver="gelsy")
    ss = float(np.sum((data.responses - design @ gamma) ** 2))
    sizes = [np.unique(c).size for c in data.points.T]
    score = tensor_ebic(ss, data.n, q, n_coef, sizes, kind, ss_floor_for(data.responses))
    gamma = gamma.reshape(shape)
    gamma.setflags(write=False)
    return ScatteredFit(float(score), gamma, ss, bool(rank < n_coef))


def _search(score, sizes, max_cells):
    """
    Minimize `score` over the index product; exhaustive when small enough.

    Beyond `max_cells` cells, cyclic coordinate descent starts at all
    zeros (strongest penalties) and sweeps one dimension at a time until no
    single-coordinate move improves. Keys compare as tuples, so ties are
    deterministic.
    """
    total = int(np.prod(sizes))
    if total <= max_cells:
        cells = itertools.product(*(range(s) for s in sizes))
        found = [(score(c), c) for c in cells]
        found = [f for f in found if f[0] is not None]
        return (min(found) if found else None), "exhaustive"
    current = tuple(0 for _ in sizes)
    best = (score(current), current)
    changed = True
    while changed:
        changed = False
        for dim, size in enumerate(sizes):
            for v in range(size):
                cand = current[:dim] + (v,) + current[dim + 1:]
                s = score(cand)
                if s is not None and (best[0] is None or (s, cand) < best):
                    if cand != current:
                        best = (s, cand)
                        current = cand
                        changed = True
    return (best if best[0] is not None else None), "coordinate"


@dataclass(frozen=True, eq=False)
class SelectionND:
    """
    Scored cells of a scattered-data fit.

    Attributes
    ----------
    dims : list of DimensionCandidates
    cells : dict
        ``cell -> ScatteredFit`` (None when skipped) for every evaluated cell.
    best : tuple of int
    model : FittedTensorModel

    """

    dims: list
    cells: dict
    best: tuple
    model: FittedTensorModel
    bounds: tuple

    def cell_model(self, cell):
        fit = self.cells[cell]
        if fit is None:
            raise OverparameterizedError(f"cell {cell} was skipped")
        kvs = tuple(build_augmented_knots(dc.knot_sets[i], self.model.q + 1, b)
                    for dc, i, b in zip(self.dims, cell, self.bounds))
        return FittedTensorModel(kvs, fit.gamma, self.model.q, fit.ebic, fit.ss,
                                 self.model.n_obs, tuple(cell), (), fit.rank_deficient)


def select_nd(data, q=2, config=None, seed=0, bounds=None, threads=None, k=None,
              max_cells=MAX_EXHAUSTIVE_CELLS):
    """
    EBIC selection over per-dimension candidate knot sets for scattered data.

    Every dimension yields one candidate knot set per equivalent-penalty
    entry. Cells are scored by the d-dimensional EBIC; identical knot-set
    tuples are fitted once. Products larger than `max_cells` are searched by
    coordinate descent instead of exhaustively. Ties go to fewer
    coefficients, then to stronger penalties in dimension order.
    """
    config = config or PathConfig()
    bounds = tuple(bounds or data.bounds())
    dims = [knots_per_dimension(data, j, q, config, seed, k, bounds[j], threads)
            for j in range(data.d)]
    log = [GRID_ORDER_NOTE]
    for dc in dims:
        log.append(f"dimension {dc.dimension}: {dc.n_clusters} point clusters, "
                   f"{dc.skipped_clusters} skipped as undersized")
    sets = [dc.knot_sets for dc in dims]
    cache = {}
    cells = {}

    def score(cell):
        knots = tuple(sets[j][i] for j, i in enumerate(cell))
        key = tuple(t.tobytes() for t in knots)
        if key not in cache:
            try:
                cache[key] = ebic_nd(data, knots, q, bounds, config.ebic_fit)
            except OverparameterizedError:
                cache[key] = None
        fit = cells[cell] = cache[key]
        return None if fit is None else (fit.ebic, fit.gamma.size)

    best, how = _search(score, [len(s) for s in sets], max_cells)
    skipped = sum(f is None for f in cells.values())
    log.append(f"{how} search over {int(np.prod([len(s) for s in sets]))} cells, "
               f"{len(cache)} distinct fits, {skipped} overparameterized")
    if best is None:
        raise OverparameterizedError("every knot-set combination has more coefficients than data")
    cell = best[1]
    fit = cells[cell]
    kvs = tuple(build_augmented_knots(sets[j][i], q + 1, b)
                for j, (i, b) in enumerate(zip(cell, bounds)))
    model = FittedTensorModel(kvs, fit.gamma, int(q), fit.ebic, fit.ss, data.n, tuple(cell),
                              (), fit.rank_deficient, tuple(log))
    return SelectionND(dims, cells, tuple(cell), model, bounds)


def fit_nd(data, q=2, config=None, seed=0, bounds=None, threads=None, k=None,
           max_cells=MAX_EXHAUSTIVE_CELLS):
    """EBIC-selected tensor spline for scattered observations (see :func:`select_nd`)."""
    return select_nd(data, q, config, seed, bounds, threads, k, max_cells).model


def fit_nd_knots(data, knot_sets, q=2, bounds=None, kind="loglik"):
    """Point-wise tensor fit with given interior knots (no selection)."""
    bounds = bounds or data.bounds()
    fit = ebic_nd(data, knot_sets, q, bounds, kind)
    kvs = tuple(build_augmented_knots(t, q + 1, b) for t, b in zip(knot_sets, bounds))
    return FittedTensorModel(kvs, fit.gamma, int(q), fit.ebic, fit.ss, data.n,
                             rank_deficient=fit.rank_deficient)
