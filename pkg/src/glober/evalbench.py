"""Synthetic test functions, sampling schemes and the replication harness.

Results are plain CSV. Leading ``#`` lines carry the effective configuration
as JSON, followed by the header row. Wall times are only written on request,
since they would make repeated runs differ.
"""

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._parallel import ordered_map
from .clusterext import ScatteredDataset, select_nd
from .exceptions import ValidationError
from .knotsel1d import PathConfig, select_1d
from .metrics import EvaluationGrid, directed_hausdorff, normalized_sup_norm
from .splinekit import build_augmented_knots, design_matrix
from .tensorfit import GridDataset, grid_values, select_2d

RESULT_COLUMNS = ("function", "n", "replication", "sigma", "q", "lambda_ebic", "k_lambda",
                  "d1", "d2", "supnorm_ebic", "supnorm_opt", "wall_ms")
SUMMARY_COLUMNS = ("function", "n", "replications", "failures", "median_k_lambda", "median_d1",
                   "median_d2", "mean_supnorm_ebic", "mean_supnorm_opt", "mean_wall_ms")
SAMPLING_MODES = ("knots-in-sample", "uniform-random")
REFERENCE_SIZE = 201
SCATTER_REFERENCE_3D = 41


@dataclass(frozen=True, eq=False)
class SyntheticFunction:
    """
    Ground-truth function on ``[0, 1]^d``.

    Attributes
    ----------
    name : str
    dims : int
    true_knots : tuple of numpy.ndarray
        Per dimension; empty for the smooth stand-ins.
    evaluator : callable
        Maps an ``(n, d)`` array (or ``(n,)`` when ``d == 1``) to ``n`` values.
    description : str

    """

    name: str
    dims: int
    true_knots: tuple
    evaluator: object
    description: str = ""

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        if self.dims == 1:
            return self.evaluator(pts.ravel())
        return self.evaluator(pts.reshape(-1, self.dims))

    @property
    def has_knots(self):
        return any(k.size for k in self.true_knots)


def _frozen(values):
    arr = np.asarray(values, dtype=float)
    arr.setflags(write=False)
    return arr


F1_KNOTS = _frozen([0.1, 0.27, 0.745])
F2_KNOTS = (_frozen([0.24, 0.545]), _frozen([0.395, 0.645]))


def _f1():
    kv = build_augmented_knots(F1_KNOTS, 3, (0.0, 1.0))
    gamma = np.zeros(kv.n_basis)
    gamma[1], gamma[4] = -2.5, 4.3

    def f(x):
        return design_matrix(kv, x) @ gamma

    return SyntheticFunction("f1", 1, (F1_KNOTS,), f,
                             "quadratic spline -2.5 B_2 + 4.3 B_5 with knots 0.1, 0.27, 0.745")


def _f2():
    kv1 = build_augmented_knots(F2_KNOTS[0], 3, (0.0, 1.0))
    kv2 = build_augmented_knots(F2_KNOTS[1], 3, (0.0, 1.0))
    gamma = np.zeros((kv1.n_basis, kv2.n_basis))
    gamma[2, 2], gamma[3, 4] = 2.3, -1.5

    def f(p):
        return np.einsum("ni,ij,nj->n", design_matrix(kv1, p[:, 0]), gamma,
                         design_matrix(kv2, p[:, 1]))

    return SyntheticFunction("f2", 2, F2_KNOTS, f,
                             "tensor quadratic spline 2.3 B_3 B_3 - 1.5 B_4 B_5")


def _smooth2d():
    def f(p):
        return (1.0 - np.exp(-3.0 * p[:, 0])) * (1.0 - np.exp(-2.0 * p[:, 1])) \
            + 0.25 * p[:, 0] * p[:, 1]

    return SyntheticFunction("smooth2d", 2, (_frozen([]), _frozen([])), f,
                             "stand-in: saturating exponential surface, no true knots")


def _smooth3d():
    def f(p):
        return (1.0 - np.exp(-3.0 * p[:, 0])) * (1.0 - np.exp(-2.0 * p[:, 1])) \
            * (1.0 - 0.5 * np.exp(-4.0 * p[:, 2]))

    return SyntheticFunction("smooth3d", 3, (_frozen([]),) * 3, f,
                             "stand-in: saturating exponential in three variables, no true knots")


FUNCTIONS = {"f1": _f1, "f2": _f2, "smooth2d": _smooth2d, "smooth3d": _smooth3d}


def get_function(name):
    try:
        return FUNCTIONS[name]()
    except KeyError:
        raise ValidationError(f"unknown function {name!r}; choose from {sorted(FUNCTIONS)}") from None


def reference_axis(size=REFERENCE_SIZE):
    """Evenly spaced reference points on ``[0, 1]``."""
    return np.linspace(0.0, 1.0, size)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    One benchmark protocol.

    `schedule` lists total sample sizes. Grid experiments (``layout="grid"``)
    need perfect squares, since ``n = m * m`` with ``m`` points per axis.
    ``layout="scattered"`` draws points uniformly in the unit cube and fits
    with the clustering method.
    """

    function: str
    sigma: float
    replications: int = 10
    schedule: tuple = (7, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
    mode: str = "knots-in-sample"
    layout: str = "grid"
    q: int = 2
    path: PathConfig = field(default_factory=PathConfig)
    seed: int = 0
    reference_size: int = REFERENCE_SIZE

    def __post_init__(self):
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        sched = tuple(int(n) for n in self.schedule)
        if not sched or any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValidationError("schedule must be non-empty and strictly increasing")
        object.__setattr__(self, "schedule", sched)
        if self.mode not in SAMPLING_MODES:
            raise ValidationError(f"mode must be one of {SAMPLING_MODES}")
        if self.layout not in ("grid", "scattered"):
            raise ValidationError("layout must be 'grid' or 'scattered'")
        if self.sigma < 0:
            raise ValidationError("sigma must be non-negative")
        func = get_function(self.function)
        if self.layout == "grid" and func.dims > 2:
            raise ValidationError("grid layout supports one or two dimensions")
        if self.layout == "scattered" and func.dims < 2:
            raise ValidationError("scattered layout needs at least two dimensions")
        if self.layout == "grid" and func.dims == 2:
            for n in sched:
                if math.isqrt(n) ** 2 != n:
                    raise ValidationError(f"2D grid sample size {n} is not a perfect square")

    def to_dict(self):
        out = asdict(self)
        out["schedule"] = list(self.schedule)
        return out


@dataclass(frozen=True, eq=False)
class Dataset:
    """A sample: 1D points, grid axes or scattered points, with responses."""

    function: SyntheticFunction
    points: np.ndarray | None
    responses: np.ndarray
    axes: tuple = ()

    @property
    def n(self):
        return self.responses.size


def _rng(config, replication):
    return np.random.default_rng([config.seed, replication])


def _axis_order(rng, knots, mode, size, m_max):
    """Nested draw order for one axis: prefixes are the samples."""
    if mode == "knots-in-sample":
        ref = reference_axis(size)
        rest = ref[~np.isin(ref, knots)]
        if rest.size + knots.size < m_max:
            raise ValidationError(f"sample size {m_max} exceeds the reference grid of {size}")
        return np.concatenate([knots, rng.permutation(rest)])
    return rng.random(m_max)


def sample_observations(config, n, replication):
    """
    Draw the observations of one replication at sample size `n`.

    Samples are nested: for a fixed replication the size-``n`` sample
    contains every smaller one, with identical noise on shared points. With
    ``knots-in-sample`` the true knots come first and the rest are drawn
    without replacement from the reference grid. ``uniform-random`` draws
    from the continuous uniform law.
    """
    func = get_function(config.function)
    sched_max = config.schedule[-1]
    if n > sched_max:
        raise ValidationError(f"n={n} exceeds the schedule maximum {sched_max}")
    rng = _rng(config, replication)
    if config.layout == "scattered":
        pts = rng.random((sched_max, func.dims))[:n]
        noise = rng.normal(size=sched_max)[:n]
        return Dataset(func, pts, func(pts) + config.sigma * noise)
    if func.dims == 1:
        order = _axis_order(rng, func.true_knots[0], config.mode, config.reference_size, sched_max)
        noise = rng.normal(size=sched_max)
        x = order[:n]
        idx = np.argsort(x, kind="stable")
        return Dataset(func, x[idx], func(x[idx]) + config.sigma * noise[:n][idx])
    m_max, m = math.isqrt(sched_max), math.isqrt(n)
    orders = [_axis_order(rng, k, config.mode, config.reference_size, m_max)
              for k in func.true_knots]
    noise = rng.normal(size=(m_max, m_max))
    axes = []
    perms = []
    for order in orders:
        idx = np.argsort(order[:m], kind="stable")
        axes.append(order[:m][idx])
        perms.append(idx)
    g1, g2 = np.meshgrid(axes[0], axes[1], indexing="ij")
    truth = func(np.column_stack([g1.ravel(), g2.ravel()])).reshape(m, m)
    eps = noise[:m, :m][np.ix_(perms[0], perms[1])]
    return Dataset(func, None, (truth + config.sigma * eps).ravel(), tuple(axes))


def evaluation_axes(func, size=REFERENCE_SIZE):
    if func.dims == 3:
        size = min(size, SCATTER_REFERENCE_3D)
    return tuple(reference_axis(size) for _ in range(func.dims))


def evaluation_grid(func, size=REFERENCE_SIZE):
    """Reference grid with truth values (the axes' full cartesian product)."""
    axes = evaluation_axes(func, size)
    if func.dims == 1:
        return EvaluationGrid.from_function(axes[0], func)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    return EvaluationGrid.from_function(pts, func)


def _knot_distances(true_knots, estimates):
    if true_knots.size == 0 or estimates.size == 0:
        return None, None
    return directed_hausdorff(true_knots, estimates), directed_hausdorff(estimates, true_knots)


@dataclass
class CellResult:
    function: str
    n: int
    replication: int
    sigma: float
    q: int
    lambda_ebic: list
    k_lambda: list
    d1: list
    d2: list
    supnorm_ebic: float | None
    supnorm_opt: float | None
    wall_ms: float | None
    error: str | None = None


def _run_1d(config, data, grid):
    sel = select_1d(data.responses, data.points, config.q, config.path, bounds=(0.0, 1.0))
    best = sel.best
    func = data.function
    x = grid.points
    sups = [normalized_sup_norm(m.predict(x), grid) for m in sel.models]
    d1, d2 = _knot_distances(func.true_knots[0], best.knots.interior)
    return ([best.lam], [best.n_knots], [d1], [d2], sups[best.index],
            min(sups) if sups else None)


def _cell_sup(model, axes, grid):
    return normalized_sup_norm(grid_values(model, axes).ravel(), grid)


def _run_tensor(config, data, grid, axes):
    func = data.function
    bounds = tuple((0.0, 1.0) for _ in range(func.dims))
    if config.layout == "grid":
        sel = select_2d(GridDataset(data.axes[0], data.axes[1], data.responses), config.q,
                        config.path, bounds)
        lam = [float(np.median(sel.sets[j].tilde_lambdas[k])) for j, k in enumerate(sel.best)]
    else:
        sel = select_nd(ScatteredDataset(data.points, data.responses), config.q, config.path,
                        seed=config.seed, bounds=bounds)
        lam = [None] * func.dims
    model = sel.model
    seen = {}
    for cell, fit in sel.cells.items():
        if fit is not None and id(fit) not in seen:
            seen[id(fit)] = _cell_sup(sel.cell_model(cell), axes, grid)
    d1s, d2s = [], []
    for j in range(func.dims):
        d1, d2 = _knot_distances(func.true_knots[j], model.knots[j].interior)
        d1s.append(d1)
        d2s.append(d2)
    sup = _cell_sup(model, axes, grid)
    return lam, list(model.n_knots), d1s, d2s, sup, min(seen.values())


def run_cell(config, n, replication, grid=None, axes=None):
    """Fit one (n, replication) cell; errors are recorded rather than raised."""
    func = get_function(config.function)
    axes = axes or evaluation_axes(func, config.reference_size)
    grid = grid or evaluation_grid(func, config.reference_size)
    start = time.perf_counter()
    try:
        data = sample_observations(config, n, replication)
        if func.dims == 1:
            out = _run_1d(config, data, grid)
        else:
            out = _run_tensor(config, data, grid, axes)
        error = None
    except Exception as exc:  # recorded per cell, the sweep goes on
        out = ([None], [None], [None], [None], None, None)
        error = f"{type(exc).__name__}: {exc}"
    wall = (time.perf_counter() - start) * 1e3
    lam, k, d1, d2, sup, sup_opt = out
    return CellResult(config.function, n, replication, config.sigma, config.q, lam, k, d1, d2,
                      sup, sup_opt, wall, error)


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    config: ExperimentConfig
    cells: list

    def rows(self, include_wall=False):
        return [_result_row(c, include_wall) for c in self.cells]

    def summary(self):
        return summarize(self.cells)

    @property
    def failures(self):
        return [c for c in self.cells if c.error]


def run_experiment(config, threads=None, progress=None):
    """
    Run every (n, replication) cell of `config`.

    Cells run on a thread pool when `threads` > 1. Results are always
    returned in (n, replication) order.
    """
    func = get_function(config.function)
    grid = evaluation_grid(func, config.reference_size)
    axes = evaluation_axes(func, config.reference_size)
    jobs = [(n, r) for n in config.schedule for r in range(config.replications)]

    def work(job):
        res = run_cell(config, job[0], job[1], grid, axes)
        if progress:
            progress(res)
        return res

    return ExperimentReport(config, ordered_map(work, jobs, threads))


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float) and math.isnan(value):
        return ""
    return repr(float(value))


def _fmt_multi(values):
    # one value per dimension, joined by ';'
    if all(v is None for v in values):
        return ""
    return ";".join(_fmt(v) for v in values)


def _result_row(cell, include_wall):
    return [cell.function, str(cell.n), str(cell.replication), _fmt(cell.sigma), str(cell.q),
            _fmt_multi(cell.lambda_ebic), _fmt_multi(cell.k_lambda), _fmt_multi(cell.d1),
            _fmt_multi(cell.d2), _fmt(cell.supnorm_ebic), _fmt(cell.supnorm_opt),
            _fmt(cell.wall_ms) if include_wall else ""]


def _per_dim(cells, attr, reduce):
    dims = max(len(getattr(c, attr)) for c in cells)
    out = []
    for j in range(dims):
        vals = [getattr(c, attr)[j] for c in cells
                if j < len(getattr(c, attr)) and getattr(c, attr)[j] is not None]
        out.append(float(reduce(vals)) if vals else None)
    return out


def summarize(cells):
    """Per-n aggregates: medians of knot metrics, means of sup norms and wall time."""
    out = []
    for n in sorted({c.n for c in cells}):
        group = [c for c in cells if c.n == n]
        ok = [c for c in group if not c.error]
        row = {"function": group[0].function, "n": n, "replications": len(group),
               "failures": len(group) - len(ok)}
        if ok:
            row["median_k_lambda"] = _per_dim(ok, "k_lambda", np.median)
            row["median_d1"] = _per_dim(ok, "d1", np.median)
            row["median_d2"] = _per_dim(ok, "d2", np.median)
            for key in ("supnorm_ebic", "supnorm_opt", "wall_ms"):
                vals = [getattr(c, key) for c in ok if getattr(c, key) is not None]
                row[f"mean_{key}"] = float(np.mean(vals)) if vals else None
        out.append(row)
    return out


def _summary_row(row, include_wall):
    def get(key):
        return row.get(key)

    return [row["function"], str(row["n"]), str(row["replications"]), str(row["failures"]),
            _fmt_multi(get("median_k_lambda") or [None]), _fmt_multi(get("median_d1") or [None]),
            _fmt_multi(get("median_d2") or [None]), _fmt(get("mean_supnorm_ebic")),
            _fmt(get("mean_supnorm_opt")),
            _fmt(get("mean_wall_ms")) if include_wall else ""]


def _render(columns, rows, meta):
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}: {json.dumps(value, sort_keys=True, separators=(',', ':'))}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(rows)
    return buf.getvalue()


def render_results(report, include_wall=False, meta=None):
    """Results CSV text: config comment lines, header, one row per cell."""
    meta = {"config": report.config.to_dict(), **(meta or {})}
    return _render(RESULT_COLUMNS, report.rows(include_wall), meta)


def render_summary(report, include_wall=False, meta=None):
    meta = {"config": report.config.to_dict(), **(meta or {})}
    return _render(SUMMARY_COLUMNS, [_summary_row(r, include_wall) for r in report.summary()],
                   meta)


def render_errors(report):
    rows = [[c.function, str(c.n), str(c.replication), c.error] for c in report.failures]
    return _render(("function", "n", "replication", "error"), rows,
                   {"config": report.config.to_dict()})


def read_results(text):
    """Parse a results CSV (skipping ``#`` lines) into a list of dicts."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


EXPERIMENTS = {
    "f1-noise": dict(function="f1", sigma=0.1, mode="knots-in-sample"),
    "f1-sampling": dict(function="f1", sigma=0.05, mode="uniform-random"),
    "f2-noise": dict(function="f2", sigma=0.01, mode="knots-in-sample",
                     schedule=(100, 400, 900, 1600)),
    "f2-sampling": dict(function="f2", sigma=0.01, mode="uniform-random",
                        schedule=(100, 400, 900, 1600)),
    "f2-cluster": dict(function="f2", sigma=0.01, mode="uniform-random", layout="scattered",
                       schedule=(100, 400, 900, 1600)),
}


def experiment_config(name, sigma=None, replications=None, seed=None, schedule=None, **extra):
    """Named protocol with optional overrides."""
    if name not in EXPERIMENTS:
        raise ValidationError(f"unknown experiment {name!r}; valid names: {', '.join(EXPERIMENTS)}")
    config = ExperimentConfig(**EXPERIMENTS[name])
    changes = {k: v for k, v in dict(sigma=sigma, replications=replications, seed=seed,
                                     schedule=schedule).items() if v is not None}
    changes.update(extra)
    return replace(config, **changes) if changes else config
