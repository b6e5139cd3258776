"""
Compare the compiled kernels with the pure-Python fallback.

Kernel timings call both modules directly in one process. The end-to-end
timing runs a 1D knot selection in two subprocesses, one of them with
``GLOBER_PURE_PYTHON=1``, so the whole package uses each backend in turn.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--sizes 200 2000 20000]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from glober import _kernels_py as pure
from glober.penalty import trend_operator
from glober.splinekit import build_augmented_knots

try:
    from glober import _kernels as compiled
except ImportError:
    compiled = None

END_TO_END = """
import json, time
import numpy as np
from glober._backend import BACKEND
from glober.evalbench import get_function
from glober.knotsel1d import select_1d
rng = np.random.default_rng(0)
x = np.sort(rng.random({n}))
y = get_function("f1")(x) + 0.1 * rng.normal(size=x.size)
start = time.perf_counter()
select_1d(y, x, 2)
print(json.dumps({{"backend": BACKEND, "seconds": time.perf_counter() - start}}))
"""


def _best(stmt, repeat):
    number = 1
    while timeit.timeit(stmt, number=number) < 0.05 and number < 10_000:
        number *= 4
    return min(timeit.repeat(stmt, number=number, repeat=repeat)) / number


def kernel_cases(n):
    rng = np.random.default_rng(n)
    x = np.sort(rng.random(n))
    kv = build_augmented_knots(np.linspace(0.05, 0.95, 30), 3, (0.0, 1.0))
    op = trend_operator(np.arange(float(n)), 2)
    beta = rng.normal(size=n)
    v = rng.normal(size=op.coef.shape[0])
    y = np.sin(np.arange(n) / 20) + 0.1 * rng.normal(size=n)

    def admm(mod):
        z = np.zeros(op.coef.shape[0])
        return lambda: mod.admm_trend(y, op.coef, 1.0, y.copy(), z.copy(), z.copy(), 1.0, 50, 0.0)

    return {
        "basis_nonzero": lambda mod: (lambda: mod.basis_nonzero(kv.augmented, 3, x)),
        "diff_apply": lambda mod: (lambda: mod.diff_apply(op.coef, beta)),
        "diff_apply_t": lambda mod: (lambda: mod.diff_apply_t(op.coef, v, n)),
        "admm_trend x50": admm,
    }


def end_to_end(n):
    out = {}
    for label, extra in (("compiled", {}), ("python", {"GLOBER_PURE_PYTHON": "1"})):
        env = dict(os.environ, **extra)
        res = subprocess.run([sys.executable, "-c", END_TO_END.format(n=n)], env=env,
                             capture_output=True, text=True, check=True)
        out[label] = json.loads(res.stdout)
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--sizes", type=int, nargs="+", default=[200, 2000, 20000])
    parser.add_argument("--fit-size", type=int, default=200)
    args = parser.parse_args(argv)
    if compiled is None:
        print("compiled kernels are not built; only the fallback can be timed")
    print(f"{'kernel':<16}{'n':>8}{'compiled us':>14}{'python us':>14}{'speedup':>10}")
    for n in args.sizes:
        for name, make in kernel_cases(n).items():
            t_py = _best(make(pure), args.repeat)
            t_c = _best(make(compiled), args.repeat) if compiled else float("nan")
            print(f"{name:<16}{n:>8}{t_c * 1e6:>14.1f}{t_py * 1e6:>14.1f}{t_py / t_c:>10.1f}")
    fits = end_to_end(args.fit_size)
    c, p = fits["compiled"], fits["python"]
    print(f"\n1D selection, n={args.fit_size}: {c['backend']} {c['seconds']:.2f} s, "
          f"{p['backend']} {p['seconds']:.2f} s, speedup {p['seconds'] / c['seconds']:.1f}")


if __name__ == "__main__":
    main()
