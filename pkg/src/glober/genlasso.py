"""Trend-filtering generalized lasso: ``min ||y - b||^2 + lam * ||D b||_1``.

The solver alternates two phases:

* an exact active-set step: given a guess of which entries of ``D b`` are
  nonzero (and their signs), the optimality conditions reduce to a banded
  linear system for the free dual entries; a few primal-dual swaps usually
  settle the support;
* bounded-variable least squares on the dual, ``min ||lam/2 D^T u - y||``
  with ``|u| <= 1``, when the swaps cycle; this is exact and finite but
  needs the dense ``D``, so it is limited to moderate sizes;
* ADMM on ``D b = z`` (compiled kernel) as the last resort, after which the
  support read from ``z`` seeds another active-set step.

Along a descending path the previous support is almost always right or one
swap away, so most grid points never leave the first phase.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.linalg import LinAlgError, cho_solve_banded, cholesky_banded, lstsq
from scipy.optimize import lsq_linear

from . import _kernels_py
from ._backend import kernels
from .exceptions import ConvergenceError, ValidationError

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000
DEFAULT_GRID_SIZE = 50
DEFAULT_MIN_RATIO = 1e-4

_ADMM_EPS = (1e-5, 1e-7, 1e-9, 1e-11, 1e-13)
_MAX_SWEEPS = 200
_STALL_SWEEPS = 20
_SAFE_SCALE = (1e-100, 1e100)
_BVLS_MAX_ROWS = 2000
# relative constraint residual above which the free solve leaves Cholesky
_DENSE_SWITCH = 1e-11
# products that cancel heavily are formed in extended precision where the
# platform has it (x86 long double); elsewhere this is plain float64
_WIDE = np.longdouble


@dataclass(frozen=True, eq=False)
class LassoSolution:
    """
    Solution at one penalty level.

    Attributes
    ----------
    lam : float
    beta : numpy.ndarray, shape (n,)
    a : numpy.ndarray, shape (m,)
        ``D @ beta``.
    u : numpy.ndarray, shape (m,)
        Dual certificate: ``2 (beta - y) + lam * D.T @ u = 0``, ``|u| <= 1``,
        ``u = sign(a)`` where ``a != 0``.
    kkt_residual : float
    iterations : int
        Active-set sweeps plus any bounded least-squares or ADMM iterations.

    """

    lam: float
    beta: np.ndarray
    a: np.ndarray
    u: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool = True
    active: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class LassoPath:
    """Solutions along a strictly descending penalty grid."""

    grid: np.ndarray
    solutions: list
    lambda_max: float

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    def __getitem__(self, k):
        return self.solutions[k]

    @property
    def total_iterations(self):
        return sum(s.iterations for s in self.solutions)

    @property
    def uncertified(self):
        """Grid indices kept although their residual missed the solver tolerance."""
        return [k for k, s in enumerate(self.solutions) if not s.converged]


def _wide_apply(op, beta):
    """``D @ beta`` accumulated in extended precision, rounded once."""
    return _kernels_py.diff_apply(op.coef.astype(_WIDE), np.asarray(beta, dtype=_WIDE)).astype(float)


def kkt_residual(y, op, lam, beta, u):
    """
    Scaled violation of the optimality conditions for ``(beta, u)``.

    The maximum of: stationarity ``|beta - y + lam/2 * D.T u|``; box
    violation ``max(|u| - 1, 0)``; complementarity ``(|a_l| - u_l a_l)``
    divided by the row norm ``||D_l||_1``. Stationarity and complementarity
    are in units of `y` and divided by ``max(1, |y|_inf)``.

    Both products are accumulated in extended precision. With closely
    spaced points ``lam/2 * D.T u`` can exceed ``beta`` by many orders of
    magnitude, and double rounding alone would then swamp the tolerance.
    """
    y = np.asarray(y, dtype=float)
    scale = max(1.0, float(np.abs(y).max()) if y.size else 1.0)
    if op.n_rows == 0:
        return float(np.abs(beta - y).max()) / scale
    coef = op.coef.astype(_WIDE)
    b = np.asarray(beta, dtype=_WIDE)
    uw = np.asarray(u, dtype=_WIDE)
    a = _kernels_py.diff_apply(coef, b)
    stat = np.abs(b - y + 0.5 * lam * _kernels_py.diff_apply_t(coef, uw, op.n)).max() / scale
    box = max(float(np.abs(u).max()) - 1.0, 0.0)
    comp = max(float(((np.abs(a) - uw * a) / op.row_norms).max()), 0.0) / scale
    return float(max(stat, box, comp))


def objective(y, op, lam, beta):
    return float(np.sum((y - beta) ** 2) + lam * np.abs(op.apply(beta)).sum())


class _KKTSystem:
    """
    Cached row-normalized Gram matrix and ``D y`` for repeated active-set solves.

    Rows are scaled to unit l1 norm before forming ``D D^T``. The free-set
    projection does not depend on row scaling. Normalizing keeps the banded
    factorization accurate when closely spaced points give rows of very
    different sizes.
    """

    def __init__(self, y, op):
        self.y = y
        self.op = op
        self.norms = op.row_norms
        d = sparse.diags(1.0 / self.norms) @ op.sparse().tocsc()
        self.gram = (d @ d.T).tocsc()
        self.bw = op.order
        self.wide_coef = op.coef.astype(_WIDE)

    def _beta(self, lam, u):
        # y - lam/2 D^T u, kept wide for the refinement below
        return self.y - 0.5 * lam * _kernels_py.diff_apply_t(self.wide_coef, u.astype(_WIDE),
                                                            self.op.n)

    def _band_factor(self, idx):
        sub = self.gram[idx][:, idx]
        p = min(self.bw, max(len(idx) - 1, 0))
        ab = np.zeros((p + 1, len(idx)))
        for d in range(p + 1):
            ab[p - d, d:] = sub.diagonal(d)
        try:
            return cholesky_banded(ab, lower=False)
        except LinAlgError:
            return None

    def _dense_solver(self, free):
        # least squares on N_F^T squares the conditioning of N_F N_F^T away
        rows = self.op.sparse()[free].toarray() / self.norms[free][:, None]
        return lambda rhs_beta: lstsq(rows.T, rhs_beta, lapack_driver="gelsy")[0]

    def free_solve(self, lam, active, signs):
        """
        Solve the optimality conditions for a fixed support and signs.

        The banded Cholesky factor of the Gram matrix is tried first. Its
        accuracy degrades with the square of the conditioning, so when it
        leaves a visible constraint residual the refinement continues with
        least squares on the rows themselves (moderate sizes only).
        """
        op = self.op
        m = op.n_rows
        u = np.zeros(m)
        u[active] = signs[active]
        free = np.flatnonzero(~active)
        beta = self._beta(lam, u)
        if not free.size:
            return beta.astype(float), u
        norms = self.norms[free]

        def constraint(beta):
            # D_free beta = 0, in units of beta
            return (_kernels_py.diff_apply(self.wide_coef, beta)[free] / norms).astype(float)

        chol = self._band_factor(free)
        steps = []
        if chol is not None:
            steps += [lambda r, b: cho_solve_banded((chol, False), (2.0 / lam) * r)] * 4
        dense = None
        for k in range(len(steps) + 4):
            resid = constraint(beta)
            if not np.any(resid):
                break
            if k < len(steps):
                w = steps[k](resid, beta)
            else:
                if dense is None:
                    if m > _BVLS_MAX_ROWS and chol is not None:
                        break
                    size = max(1.0, float(np.abs(self.y).max()))
                    if chol is not None and np.abs(resid).max() <= _DENSE_SWITCH * size:
                        break
                    dense = self._dense_solver(free)
                w = (2.0 / lam) * dense(beta.astype(float))
            u[free] += w / norms
            beta = self._beta(lam, u)
        return beta.astype(float), u


def _check_inputs(y, op, lam, tol):
    y = np.ascontiguousarray(y, dtype=float).ravel()
    if y.size != op.n:
        raise ValidationError(f"response length {y.size} does not match operator width {op.n}")
    if not np.all(np.isfinite(y)):
        raise ValidationError("responses must be finite")
    if lam < 0:
        raise ValidationError(f"lambda must be non-negative, got {lam}")
    if tol <= 0:
        raise ValidationError(f"tol must be positive, got {tol}")
    return y


def _strongest_per_run(mask, strength):
    """Keep only the largest entry of each run of consecutive True values."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return mask
    breaks = np.flatnonzero(np.diff(idx) > 1) + 1
    out = np.zeros_like(mask)
    for run in np.split(idx, breaks):
        out[run[np.argmax(strength[run])]] = True
    return out


def _active_set_loop(system, lam, active, signs, tol):
    """Primal-dual swaps from an initial support; returns the best iterate."""
    y, op = system.y, system.op
    active = active.copy()
    signs = signs.copy()
    best = None
    sweeps = 0
    since_best = 0
    seen = set()
    for _ in range(_MAX_SWEEPS):
        sweeps += 1
        beta, u = system.free_solve(lam, active, signs)
        res = kkt_residual(y, op, lam, beta, u)
        if best is None or res < best[2]:
            best = (beta, u, res, active.copy())
            since_best = 0
        else:
            since_best += 1
        if res <= tol or since_best >= _STALL_SWEEPS:
            break
        a = op.apply(beta)
        enter = _strongest_per_run((~active) & (np.abs(u) > 1.0), np.abs(u))
        leave = active & (signs * a < 0)
        if not enter.any() and not leave.any():
            break
        signs[enter] = np.sign(u[enter])
        active = (active | enter) & ~leave
        key = active.tobytes() + np.signbit(signs).tobytes()
        if key in seen:
            break
        seen.add(key)
    return best, sweeps


def _polished(system, lam, u, tol):
    """Evaluate a dual point, then polish its support with the active-set loop."""
    op = system.op
    beta = system.y - 0.5 * lam * op.apply_t(u)
    direct = (beta, u, kkt_residual(system.y, op, lam, beta, u), np.abs(u) >= 1.0)
    if direct[2] <= tol:
        return direct, 0
    active = np.abs(u) >= 1.0 - 1e-9
    polished, sweeps = _active_set_loop(system, lam, active, np.where(active, np.sign(u), 0.0),
                                        tol)
    return (polished if polished[2] < direct[2] else direct), sweeps


def _bvls_dual(system, lam, tol):
    """Dual box-constrained least squares, polished by the active-set loop."""
    op = system.op
    norms = system.norms
    # columns scaled to unit l1 norm, so the bounds become +-norms
    a = (0.5 * lam) * (op.sparse().toarray() / norms[:, None]).T
    res = lsq_linear(a, system.y, bounds=(-norms, norms), method="bvls", tol=1e-14,
                     max_iter=20 * op.n_rows + 100)
    best, sweeps = _polished(system, lam, np.clip(res.x / norms, -1.0, 1.0), tol)
    return best, int(res.nit) + sweeps


def solve(y, op, lam, warm_start=None, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
          accept=None, _system=None):
    """
    Solve ``min ||y - b||^2 + lam * ||op @ b||_1``.

    Parameters
    ----------
    y : array_like, shape (n,)
    op : DifferenceOperator
    lam : float
        Penalty level, ``>= 0``.
    warm_start : LassoSolution, optional
        Solution at a nearby penalty; its support seeds the active set.
    tol : float
        Target :func:`kkt_residual`.
    max_iter : int
        Cap on ADMM iterations.
    accept : float, optional
        If an earlier phase already reaches this residual but not `tol`,
        stop there; the later phases cannot beat the precision limit either.

    Raises
    ------
    ConvergenceError
        If no iterate reaches `tol`; the best one is attached.

    """
    y = _check_inputs(y, op, lam, tol)
    m = op.n_rows
    scale = float(np.abs(y).max()) if y.size else 0.0
    if lam > 0 and scale > 0 and not _SAFE_SCALE[0] <= scale <= _SAFE_SCALE[1]:
        # the problem is scale-equivariant; solve at unit size to avoid over/underflow
        unit = solve(y / scale, op, lam / scale, None, tol, max_iter, accept)
        beta = unit.beta * scale
        res = kkt_residual(y, op, lam, beta, unit.u)
        return _make_solution(op, lam, (beta, unit.u.copy(), res,
                                        unit.active.copy()), unit.iterations, unit.converged)
    if lam == 0 or m == 0:
        u = np.zeros(m)
        a = op.apply(y) if m else np.zeros(0)
        return LassoSolution(float(lam), y.copy(), a, u, 0.0, 0, True,
                             np.zeros(m, dtype=bool))

    system = _system if _system is not None else _KKTSystem(y, op)
    iterations = 0
    if warm_start is not None:
        active = warm_start.active.copy()
        signs = np.where(active, np.sign(warm_start.u), 0.0)
    else:
        active = np.zeros(m, dtype=bool)
        signs = np.zeros(m)
    best, sweeps = _active_set_loop(system, lam, active, signs, tol)
    iterations += sweeps
    if best[2] <= tol:
        return _make_solution(op, lam, best, iterations, True)
    if accept is not None and best[2] <= accept:
        _fail(op, lam, tol, best, iterations)
    if m <= _BVLS_MAX_ROWS:
        cand, steps = _bvls_dual(system, lam, tol)
        iterations += steps
        if cand[2] < best[2]:
            best = cand
        if best[2] <= tol:
            return _make_solution(op, lam, best, iterations, True)
    if accept is not None and best[2] <= accept:
        _fail(op, lam, tol, best, iterations)

    # ADMM state: z ~ D beta, w = scaled dual
    rho = float(lam)
    if warm_start is not None:
        beta = warm_start.beta.copy()
        z = warm_start.a.copy()
        w = warm_start.u * (lam / rho)
    else:
        beta = y.copy()
        z = np.zeros(m)
        w = np.zeros(m)
    beta = np.ascontiguousarray(beta)
    z = np.ascontiguousarray(z)
    w = np.ascontiguousarray(w)
    coef = np.ascontiguousarray(op.coef)
    budget = max_iter
    for eps in _ADMM_EPS:
        if budget <= 0:
            break
        its, rho, _ = kernels.admm_trend(y, coef, float(lam), beta, z, w, rho, budget, eps)
        budget -= its
        iterations += its
        u_admm = np.clip(rho * w / lam, -1.0, 1.0)
        res = kkt_residual(y, op, lam, beta, u_admm)
        if res < best[2]:
            best = (beta.copy(), u_admm, res, z != 0)
        if res <= tol:
            break
        cand, sweeps = _active_set_loop(system, lam, z != 0, np.sign(z), tol)
        iterations += sweeps
        if cand[2] < best[2]:
            best = cand
        if best[2] <= tol:
            break
    if best[2] > tol:
        _fail(op, lam, tol, best, iterations)
    return _make_solution(op, lam, best, iterations, True)


def _fail(op, lam, tol, best, iterations):
    raise ConvergenceError(
        f"no iterate reached KKT residual {tol:g} at lambda={lam:g} "
        f"(best {best[2]:.3g} after {iterations} iterations)",
        solution=_make_solution(op, lam, best, iterations, False),
    )


def _make_solution(op, lam, best, iterations, converged):
    beta, u, res, active = best
    a = _wide_apply(op, beta)
    for arr in (beta, a, u, active):
        arr.setflags(write=False)
    return LassoSolution(float(lam), beta, a, u, float(res), int(iterations),
                         bool(converged), active)


def compute_lambda_max(y, op):
    """
    Smallest penalty at which ``op @ beta_hat`` vanishes.

    Equals ``2 * ||(D D^T)^{-1} D y||_inf`` for this objective (no 1/2 in
    front of the squared loss). When closely spaced points make the banded
    factorization of ``D D^T`` fail, the dual is found by least squares on
    ``D^T`` instead.
    """
    y = np.ascontiguousarray(y, dtype=float).ravel()
    if y.size != op.n:
        raise ValidationError(f"response length {y.size} does not match operator width {op.n}")
    if op.n_rows == 0:
        return 0.0
    system = _KKTSystem(y, op)
    # lam = 2 turns the free solve into (D D^T) u = D y
    _, u = system.free_solve(2.0, np.zeros(op.n_rows, dtype=bool), np.zeros(op.n_rows))
    return 2.0 * float(np.abs(u).max())


def lambda_grid(lambda_max, grid_size=DEFAULT_GRID_SIZE, min_ratio=DEFAULT_MIN_RATIO):
    """Log-spaced descending grid from `lambda_max` to ``lambda_max * min_ratio``."""
    if grid_size < 2:
        raise ValidationError(f"grid_size must be >= 2, got {grid_size}")
    if not 0 < min_ratio < 1:
        raise ValidationError(f"min_ratio must be in (0, 1), got {min_ratio}")
    anchor = lambda_max if lambda_max > 0 else 1.0
    return anchor * np.logspace(0.0, np.log10(min_ratio), grid_size)


def solve_path(y, op, grid_size=DEFAULT_GRID_SIZE, tol=DEFAULT_TOL,
               min_ratio=DEFAULT_MIN_RATIO, warm=True, max_iter=DEFAULT_MAX_ITER, accept=None):
    """
    Solve along a descending log-spaced grid anchored at :func:`compute_lambda_max`.

    Each solve is warm-started from the previous one unless ``warm=False``.

    Parameters
    ----------
    accept : float, optional
        When given, a grid point whose best iterate misses `tol` but reaches
        `accept` is kept (``converged=False``) with a ``RuntimeWarning``
        instead of raising. Very close points can make ``D D^T`` so badly
        conditioned that double precision cannot certify `tol`.

    Raises
    ------
    ConvergenceError
        If some grid point misses `tol` and, when set, `accept`.

    """
    if accept is not None and accept < tol:
        raise ValidationError(f"accept ({accept:g}) must be at least tol ({tol:g})")
    y = np.ascontiguousarray(y, dtype=float).ravel()
    lmax = compute_lambda_max(y, op)
    grid = lambda_grid(lmax, grid_size, min_ratio)
    grid.setflags(write=False)
    system = _KKTSystem(y, op) if op.n_rows else None
    solutions = []
    prev = None
    for lam in grid:
        try:
            sol = solve(y, op, float(lam), warm_start=prev if warm else None, tol=tol,
                        max_iter=max_iter, accept=accept, _system=system)
        except ConvergenceError as exc:
            sol = exc.solution
            if accept is None or sol is None or sol.kkt_residual > accept:
                raise
            warnings.warn(f"KKT residual {sol.kkt_residual:.3g} at lambda={lam:.6g} misses "
                          f"tol={tol:g}; keeping the best iterate", RuntimeWarning, stacklevel=2)
        solutions.append(sol)
        prev = sol
    return LassoPath(grid, solutions, lmax)
