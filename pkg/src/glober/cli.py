"""Command-line interface: ``glober fit``, ``glober predict`` and ``glober bench``."""

import argparse
import csv
import io
import logging
import os
import shutil
import sys
import tempfile
import time

import numpy as np

from . import __version__, evalbench
from ._backend import BACKEND
from ._parallel import THREADS_ENV, thread_count
from .clusterext import ScatteredDataset, select_nd
from .exceptions import ConvergenceError, OverparameterizedError, RankDeficiencyError, \
    ValidationError
from .knotsel1d import PathConfig, select_1d
from .modelio import atomic_write, load_model, model_bounds, model_dims, predict_points, \
    save_model
from .tensorfit import GridDataset, select_2d

log = logging.getLogger("glober")

EXIT_OK = 0
EXIT_FAILURE = 1
EXPECTED_ERRORS = (ValidationError, ConvergenceError, OverparameterizedError,
                   RankDeficiencyError, OSError)


class CsvError(ValidationError):
    """Malformed CSV input."""


def read_table(path, n_columns=None):
    """
    Read a numeric CSV with a header row; ``#`` lines are skipped.

    Returns
    -------
    header : list of str
    values : numpy.ndarray, shape (rows, columns)
    raw : list of list of str
        The data rows as text, for pass-through output.

    Raises
    ------
    CsvError
        Naming the 1-based data row (and file line) of the first bad entry.

    """
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    lines = [(i + 1, ln) for i, ln in enumerate(text.splitlines())
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        return [], np.zeros((0, n_columns or 0)), []
    parsed = list(csv.reader([ln for _, ln in lines]))
    header = [h.strip() for h in parsed[0]]
    width = len(header)
    if n_columns is not None and width < n_columns:
        raise CsvError(f"{path}: header has {width} columns, need at least {n_columns}")
    rows = []
    raw = []
    for row_no, ((line_no, _), fields) in enumerate(zip(lines[1:], parsed[1:]), start=1):
        if len(fields) != width:
            raise CsvError(f"{path}: row {row_no} (line {line_no}) has {len(fields)} fields, "
                           f"expected {width}")
        use = fields if n_columns is None else fields[:n_columns]
        vals = []
        for col, field in zip(header, use):
            field = field.strip()
            if field == "":
                raise CsvError(f"{path}: row {row_no} (line {line_no}) is missing a value "
                               f"in column '{col}'")
            try:
                v = float(field)
            except ValueError:
                raise CsvError(f"{path}: row {row_no} (line {line_no}) has non-numeric value "
                               f"{field!r} in column '{col}'") from None
            if not np.isfinite(v):
                raise CsvError(f"{path}: row {row_no} (line {line_no}) has non-finite value "
                               f"in column '{col}'")
            vals.append(v)
        rows.append(vals)
        raw.append(fields)
    cols = width if n_columns is None else n_columns
    return header, np.array(rows, dtype=float).reshape(-1, cols), raw


def detect_grid(points):
    """
    Axes of a full cartesian grid, or None.

    Requires every combination of the distinct coordinate values to occur
    exactly once (exact matching, no tolerance).
    """
    if points.shape[1] != 2:
        return None
    axes = [np.unique(points[:, j]) for j in range(2)]
    if axes[0].size * axes[1].size != points.shape[0]:
        return None
    if np.unique(points, axis=0).shape[0] != points.shape[0]:
        return None
    return axes


def _grid_dataset(points, y, axes):
    i = np.searchsorted(axes[0], points[:, 0])
    j = np.searchsorted(axes[1], points[:, 1])
    mat = np.empty((axes[0].size, axes[1].size))
    mat[i, j] = y
    return GridDataset.from_matrix(axes[0], axes[1], mat)


def _path_config(args):
    return PathConfig(grid_size=args.grid_size, min_ratio=args.lambda_min_ratio)


def cmd_fit(args):
    start = time.perf_counter()
    dims = args.dims
    header, table, _ = read_table(args.input, None if dims is None else dims + 1)
    if dims is None:
        dims = len(header) - 1
        if dims < 1:
            raise CsvError(f"{args.input}: need at least one coordinate and one response column")
    elif len(header) != dims + 1:
        raise CsvError(f"{args.input}: expected {dims + 1} columns for --dims {dims}, "
                       f"found {len(header)}")
    if table.shape[0] == 0:
        raise ValidationError(f"{args.input}: no data rows")
    points, y = table[:, :dims], table[:, dims]
    if np.unique(points, axis=0).shape[0] != points.shape[0]:
        raise ValidationError(f"{args.input}: duplicate coordinate rows")
    config = _path_config(args)
    threads = thread_count(args.threads)
    effective = {"dims": dims, "degree": args.degree, "mode": args.mode, "seed": args.seed,
                 "path": config.__dict__.copy(), "input": os.path.basename(args.input)}
    if dims == 1:
        if args.mode == "cluster":
            raise ValidationError("cluster mode needs at least two dimensions")
        sel = select_1d(y, points[:, 0], args.degree, config)
        model, used = sel.best, "1d"
        knots = (model.n_knots,)
    else:
        axes = detect_grid(points)
        if args.mode == "grid" and axes is None:
            raise ValidationError("grid mode needs a full two-dimensional cartesian grid")
        if args.mode == "grid" or (args.mode == "auto" and axes is not None):
            log.info("mode %s: full %dx%d grid detected, using the grid fit", args.mode,
                     axes[0].size, axes[1].size)
            model = select_2d(_grid_dataset(points, y, axes), args.degree, config,
                              threads=threads).model
            used = "grid"
        else:
            if args.mode == "auto":
                log.info("mode auto: no full grid detected, using the cluster fit")
            data = ScatteredDataset(points, y)
            model = select_nd(data, args.degree, config, seed=args.seed, threads=threads).model
            used = "cluster"
        knots = model.n_knots
    effective["mode_used"] = used
    save_model(model, args.out, effective, {"backend": BACKEND})
    wall = time.perf_counter() - start
    print(f"fit: mode={used} n={y.size} knots={list(knots)} ebic={model.ebic:.6g} "
          f"wall={wall:.2f}s -> {args.out}")
    return EXIT_OK


def cmd_predict(args):
    model = load_model(args.model)
    d = model_dims(model)
    header, table, raw = read_table(args.points, d)
    if not header:
        header = [f"x{j + 1}" for j in range(d)]
    bounds = model_bounds(model)
    bad = []
    for r, row in enumerate(table, start=1):
        if any(not lo <= v <= hi for v, (lo, hi) in zip(row, bounds)):
            bad.append(r)
    if bad:
        shown = ", ".join(str(b) for b in bad[:20]) + (" ..." if len(bad) > 20 else "")
        raise ValidationError(f"{len(bad)} row(s) outside the model domain {list(bounds)}: "
                              f"rows {shown}")
    preds = predict_points(model, table) if table.shape[0] else np.zeros(0)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header + ["prediction"])
    for fields, p in zip(raw, np.atleast_1d(preds)):
        writer.writerow(list(fields) + [f"{float(p):.17g}"])
    if args.out:
        atomic_write(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_bench(args):
    schedule = tuple(args.schedule) if args.schedule else None
    config = evalbench.experiment_config(args.experiment, sigma=args.sigma,
                                         replications=args.reps, seed=args.seed,
                                         schedule=schedule)
    threads = thread_count(args.threads)

    def progress(cell):
        status = "error" if cell.error else "ok"
        log.info("n=%d replication=%d %s %.0f ms", cell.n, cell.replication, status, cell.wall_ms)

    report = evalbench.run_experiment(config, threads, progress)
    meta = {"experiment": args.experiment}
    files = {
        "results.csv": evalbench.render_results(report, args.timing, meta),
        "summary.csv": evalbench.render_summary(report, args.timing, meta),
        "errors.csv": evalbench.render_errors(report),
    }
    os.makedirs(args.out, exist_ok=True)
    staging = tempfile.mkdtemp(prefix=".bench-", dir=args.out)
    try:
        for name, text in files.items():
            with open(os.path.join(staging, name), "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for name in files:
            os.replace(os.path.join(staging, name), os.path.join(args.out, name))
    finally:
        shutil.rmtree(staging, ignore_errors=True)
    for row in report.summary():
        print(f"{row['function']} n={row['n']}: failures={row['failures']} "
              f"mean_supnorm_ebic={row.get('mean_supnorm_ebic')}")
    if report.failures:
        print(f"{len(report.failures)} cell(s) failed; see errors.csv", file=sys.stderr)
    return EXIT_OK


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _ratio(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("must be in (0, 1)")
    return v


def build_parser():
    parser = argparse.ArgumentParser(prog="glober", description="Adaptive-knot spline regression.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    parser.add_argument("--threads", type=_positive_int, default=None,
                        help=f"worker threads (default: ${THREADS_ENV} or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model from a CSV file")
    fit.add_argument("input", help="CSV with coordinate columns then one response column")
    fit.add_argument("--dims", type=_positive_int, default=None,
                     help="number of coordinate columns (default: all but the last)")
    fit.add_argument("--degree", type=int, default=2, help="spline degree q (default 2)")
    fit.add_argument("--grid-size", type=_positive_int, default=PathConfig.grid_size)
    fit.add_argument("--lambda-min-ratio", type=_ratio, default=PathConfig.min_ratio)
    fit.add_argument("--mode", choices=("auto", "grid", "cluster"), default="auto")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", required=True, help="model file to write")
    fit.set_defaults(func=cmd_fit)

    pred = sub.add_parser("predict", help="evaluate a model at the points of a CSV file")
    pred.add_argument("model")
    pred.add_argument("points", help="CSV whose first columns are the coordinates")
    pred.add_argument("--out", default=None, help="output CSV (default: standard output)")
    pred.set_defaults(func=cmd_predict)

    bench = sub.add_parser("bench", help="run a benchmark protocol")
    bench.add_argument("--experiment", required=True,
                       help=f"one of: {', '.join(evalbench.EXPERIMENTS)}")
    bench.add_argument("--sigma", type=float, default=None)
    bench.add_argument("--reps", type=_positive_int, default=None)
    bench.add_argument("--seed", type=int, default=None)
    bench.add_argument("--schedule", type=_positive_int, nargs="+", default=None,
                       help="sample sizes (default: the protocol's schedule)")
    bench.add_argument("--timing", action="store_true",
                       help="fill wall_ms in results (makes output run-dependent)")
    bench.add_argument("--out", required=True, help="output directory")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="glober: %(message)s", stream=sys.stderr)
    if args.command == "bench" and args.experiment not in evalbench.EXPERIMENTS:
        print(f"glober: error: unknown experiment {args.experiment!r}; valid names: "
              f"{', '.join(evalbench.EXPERIMENTS)}", file=sys.stderr)
        return EXIT_FAILURE
    try:
        return args.func(args)
    except EXPECTED_ERRORS as exc:
        print(f"glober: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
