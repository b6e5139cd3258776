"""One-dimensional knot selection: trend-filtering path, knot extraction, EBIC choice."""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lstsq
from scipy.special import gammaln

from . import genlasso
from .exceptions import DomainError, ValidationError
from .penalty import trend_operator
from .splinekit import build_augmented_knots, design_matrix, spline_values

ZERO_THRESHOLD = 1e-6
ROUNDING_FLOOR = 1e-12
# largest KKT residual a path point may keep when double precision cannot reach tol
ACCEPT_RESIDUAL = 1e-6
MIN_GAP_FACTOR = 1e-9


@dataclass(frozen=True)
class PathConfig:
    """Settings shared by every trend-filtering path."""

    grid_size: int = genlasso.DEFAULT_GRID_SIZE
    min_ratio: float = genlasso.DEFAULT_MIN_RATIO
    tol: float = genlasso.DEFAULT_TOL
    accept: float = ACCEPT_RESIDUAL
    threshold: float = ZERO_THRESHOLD
    weighting: str = "divided"
    max_iter: int = genlasso.DEFAULT_MAX_ITER
    ebic_fit: str = "loglik"

    def __post_init__(self):
        if self.grid_size < 2:
            raise ValidationError("grid_size must be at least 2")
        if not 0 < self.min_ratio < 1:
            raise ValidationError("min_ratio must be in (0, 1)")
        if self.accept < self.tol:
            raise ValidationError("accept must be at least tol")
        if self.threshold <= 0:
            raise ValidationError("threshold must be positive")
        if self.ebic_fit not in ("loglik", "ss"):
            raise ValidationError("ebic_fit must be 'loglik' or 'ss'")


@dataclass(frozen=True, eq=False)
class SelectedKnots:
    """Knots read off one path solution (0-based point indices)."""

    lam: float
    indices: np.ndarray
    knots: np.ndarray

    @property
    def count(self):
        return int(self.knots.size)


@dataclass(frozen=True, eq=False)
class FittedSplineModel:
    """
    Least-squares B-spline fit on a fixed knot set.

    Attributes
    ----------
    knots : AugmentedKnotVector
    gamma : numpy.ndarray, shape (q + K + 1,)
    q : int
        Spline degree; the order is ``q + 1``.
    lam : float or None
        Penalty level that produced the knots (None when knots were given).
    ebic : float
    ss : float
        Residual sum of squares.
    rank_deficient : bool
        The design matrix lost rank; `gamma` is the minimum-norm solution.

    """

    knots: object
    gamma: np.ndarray
    q: int
    lam: float | None
    ebic: float
    ss: float
    n_obs: int
    rank_deficient: bool = False
    index: int | None = field(default=None, compare=False)

    @property
    def n_knots(self):
        return self.knots.n_interior

    @property
    def bounds(self):
        return self.knots.bounds

    def predict(self, x):
        return predict(self, x)


def sort_observations(points, y):
    """Sort by abscissa, rejecting duplicates and non-finite values."""
    x = np.asarray(points, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise ValidationError(f"{x.size} points but {y.size} responses")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("points and responses must be finite")
    order = np.argsort(x, kind="stable")
    x, y = x[order], y[order]
    if np.any(np.diff(x) == 0):
        raise ValidationError("duplicate x values are not allowed")
    return x, y


def merge_close_knots(knots, strength, min_gap, bounds):
    """
    Drop knots on or outside `bounds` and merge runs closer than `min_gap`.

    Within a merged run the knot with the largest `strength` is kept.
    """
    knots = np.asarray(knots, dtype=float)
    strength = np.asarray(strength, dtype=float)
    keep = (knots > bounds[0]) & (knots < bounds[1])
    knots, strength = knots[keep], strength[keep]
    if knots.size == 0:
        return knots
    order = np.argsort(knots, kind="stable")
    knots, strength = knots[order], strength[order]
    out = [knots[0]]
    best = [strength[0]]
    for k, s in zip(knots[1:], strength[1:]):
        if k - out[-1] < min_gap:
            if s > best[-1]:
                out[-1], best[-1] = k, s
        else:
            out.append(k)
            best.append(s)
    return np.asarray(out)


def extract_knots(sol, points, threshold=ZERO_THRESHOLD, bounds=None, row_norms=None,
                  resolution=ROUNDING_FLOOR):
    """
    Knots at ``points[l + 1]`` for every entry ``a[l]`` judged nonzero.

    An entry counts as nonzero when ``|a[l]| > threshold * max(1, max|a|)``.
    When the operator's `row_norms` are given, entries below
    ``resolution * row_norms[l] * max(1, max|beta|)`` are also treated as
    zero. A solution certified to KKT tolerance ``tol`` cannot tell such
    entries from zero when ``resolution = tol``; closely spaced points give
    rows with very large norms, where this matters.
    """
    x = np.asarray(points, dtype=float)
    a = np.asarray(sol.a)
    if threshold <= 0:
        raise ValidationError("threshold must be positive")
    if a.size == 0:
        return SelectedKnots(sol.lam, np.zeros(0, dtype=int), np.zeros(0))
    cut = threshold * max(1.0, float(np.abs(a).max()))
    if row_norms is not None:
        beta_scale = max(1.0, float(np.abs(sol.beta).max()))
        cut = np.maximum(cut, resolution * beta_scale * np.asarray(row_norms))
    rows = np.flatnonzero(np.abs(a) > cut)
    idx = rows + 1
    lo, hi = (x[0], x[-1]) if bounds is None else bounds
    span = x[-1] - x[0]
    knots = merge_close_knots(x[idx], np.abs(a[rows]), span * MIN_GAP_FACTOR, (lo, hi))
    kept = np.searchsorted(x, knots)
    return SelectedKnots(sol.lam, kept, knots)


def log_binomial(top, k):
    """``log C(top, k)`` through log-gamma, safe for large arguments."""
    return float(gammaln(top + 1) - gammaln(k + 1) - gammaln(top - k + 1))


def fit_term(ss, n, kind="loglik", ss_floor=0.0):
    """
    Goodness-of-fit part of EBIC.

    ``"ss"`` returns the residual sum of squares itself; ``"loglik"`` returns
    the Gaussian profile deviance ``n * log(ss / n)``, with `ss` floored at
    `ss_floor` so exact fits tie instead of racing to ``-inf``.
    """
    if kind == "ss":
        return float(ss)
    if kind == "loglik":
        ss = max(float(ss), ss_floor, 1e-300)
        return float(n * np.log(ss / n))
    raise ValidationError(f"unknown EBIC fit term {kind!r}")


def max_coefficients(n, kind="loglik"):
    """
    Largest admissible coefficient count for `n` observations.

    The log-likelihood fit term needs a residual degree of freedom, since an
    interpolating fit would send ``log(ss)`` to its floor; the plain
    ``"ss"`` term only needs ``n_coef <= n``.
    """
    return n - 1 if kind == "loglik" else n


def ss_floor_for(y):
    # residuals at rounding level are indistinguishable from zero
    return 1e-20 * float(np.dot(y, y))


def ebic_score(ss, n, q, k, k_max, kind="ss", ss_floor=0.0):
    """
    EBIC of a spline with ``q + k + 1`` coefficients.

    ``fit + (q+k+1) log n + 2 log C(q+k_max+1, q+k+1)``, where ``fit`` is
    given by :func:`fit_term` (the raw `ss` by default).
    """
    if k > k_max:
        raise ValidationError(f"K={k} exceeds K_max={k_max}")
    if n < 1:
        raise ValidationError("n must be positive")
    p = q + k + 1
    return (fit_term(ss, n, kind, ss_floor) + p * np.log(n)
            + 2.0 * log_binomial(q + k_max + 1, p))


def ebic(model, n, k_max=None, kind="ss"):
    """EBIC of a fitted model with the given fit term."""
    return ebic_score(model.ss, n, model.q, model.n_knots, n if k_max is None else k_max, kind)


def least_squares(design, y):
    """Minimum-norm least squares via pivoted orthogonal factorization."""
    gamma, _, rank, _ = lstsq(design, y, lapack_driver="gelsy")
    return gamma, rank < design.shape[1]


def fit_spline(y, points, knots, q, bounds=None, k_max=None, lam=None, ebic_fit="loglik"):
    """
    Least-squares fit of an order ``q + 1`` spline with the given interior knots.

    `knots` may be a :class:`SelectedKnots` or a plain sequence. A
    rank-deficient design yields the minimum-norm coefficients, sets
    ``rank_deficient`` and emits a :class:`RuntimeWarning`.
    """
    x = np.asarray(points, dtype=float)
    y = np.asarray(y, dtype=float)
    if isinstance(knots, SelectedKnots):
        lam = knots.lam if lam is None else lam
        knots = knots.knots
    if bounds is None:
        bounds = (x.min(), x.max())
    kv = build_augmented_knots(knots, q + 1, bounds)
    design = design_matrix(kv, x)
    gamma, deficient = least_squares(design, y)
    if deficient:
        warnings.warn(
            f"rank-deficient spline design with {kv.n_interior} knots; "
            "using minimum-norm coefficients",
            RuntimeWarning,
            stacklevel=2,
        )
    ss = float(np.sum((y - design @ gamma) ** 2))
    n = y.size
    score = ebic_score(ss, n, q, kv.n_interior, n if k_max is None else k_max,
                       ebic_fit, ss_floor_for(y))
    gamma.setflags(write=False)
    return FittedSplineModel(kv, gamma, int(q), lam, score, ss, n, deficient)


def predict(model, x):
    """
    Evaluate a fitted spline; scalars in, scalar out.

    Raises
    ------
    DomainError
        For points outside the model bounds (no extrapolation).

    """
    scalar = np.ndim(x) == 0
    vals = spline_values(model.knots, model.gamma, np.atleast_1d(np.asarray(x, dtype=float)))
    return float(vals[0]) if scalar else vals


@dataclass(frozen=True, eq=False)
class Selection1D:
    """Every candidate model along the path and the EBIC choice."""

    path: genlasso.LassoPath
    candidates: list
    models: list
    best_index: int

    @property
    def best(self):
        return self.models[self.best_index]


def path_candidates(y, points, q, config=None, bounds=None, op=None):
    """
    Solve the trend-filtering path on sorted data and read knots off every solution.

    Returns
    -------
    path : LassoPath
    candidates : list of SelectedKnots
        One per grid entry, in decreasing-penalty order.

    """
    config = config or PathConfig()
    x = np.asarray(points, dtype=float)
    if op is None:
        op = trend_operator(x, q, config.weighting)
    path = genlasso.solve_path(y, op, config.grid_size, config.tol, config.min_ratio,
                               max_iter=config.max_iter, accept=config.accept)
    norms = op.row_norms
    # an iterate certified only to r cannot resolve entries below r
    candidates = [extract_knots(sol, x, config.threshold, bounds, norms,
                                max(config.tol, sol.kkt_residual)) for sol in path]
    return path, candidates


def select_1d(y, points, q=2, config=None, bounds=None, k_max=None):
    """
    Run the path, fit a spline per penalty level and score each by EBIC.

    Ties in EBIC go to the larger penalty (earlier grid entry).
    """
    config = config or PathConfig()
    x, y = sort_observations(points, y)
    if x.size < q + 2:
        raise ValidationError(f"need at least q + 2 = {q + 2} observations, got {x.size}")
    if bounds is None:
        bounds = (x[0], x[-1])
    elif bounds[0] > x[0] or bounds[1] < x[-1]:
        raise DomainError(f"observations fall outside bounds {bounds}")
    path, candidates = path_candidates(y, x, q, config, bounds)
    cache = {}
    models = []
    for k, cand in enumerate(candidates):
        key = cand.knots.tobytes()
        if key not in cache:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                cache[key] = fit_spline(y, x, cand.knots, q, bounds, k_max,
                                        ebic_fit=config.ebic_fit)
        base = cache[key]
        models.append(FittedSplineModel(base.knots, base.gamma, base.q, cand.lam, base.ebic,
                                        base.ss, base.n_obs, base.rank_deficient, k))
    scores = np.array([m.ebic for m in models])
    best = int(np.argmin(scores))
    return Selection1D(path, candidates, models, best)


def fit_1d(y, points, q=2, config=None, bounds=None, k_max=None):
    """EBIC-selected spline estimator for one-dimensional data."""
    return select_1d(y, points, q, config, bounds, k_max).best
