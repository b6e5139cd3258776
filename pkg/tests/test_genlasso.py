import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glober.exceptions import ValidationError
from glober.genlasso import (
    compute_lambda_max,
    kkt_residual,
    lambda_grid,
    objective,
    solve,
    solve_path,
)
from glober.penalty import trend_operator

from oracles import fused_lasso_oracle


def _poly_fit(x, y, q):
    v = np.vander(x, q + 1)
    return v @ np.linalg.lstsq(v, y, rcond=None)[0]


def test_lambda_zero_returns_data():
    rng = np.random.default_rng(0)
    y = rng.normal(size=15)
    sol = solve(y, trend_operator(np.linspace(0, 1, 15), 1), 0.0)
    np.testing.assert_allclose(sol.beta, y, atol=1e-10)


@pytest.mark.parametrize("q", [0, 1, 2])
def test_above_lambda_max_gives_polynomial(q):
    rng = np.random.default_rng(q)
    x = np.sort(rng.random(20))
    y = rng.normal(size=20)
    op = trend_operator(x, q)
    lmax = compute_lambda_max(y, op)
    sol = solve(y, op, 1.01 * lmax)
    np.testing.assert_allclose(sol.beta, _poly_fit(x, y, q), atol=1e-7)
    # a_l is measured in units of the row's l1 norm times the size of beta
    assert np.abs(sol.a / op.row_norms).max() <= 1e-10 * max(1.0, np.abs(sol.beta).max())


def test_step_signal_small_lambda():
    x = np.linspace(0, 1, 6)
    y = np.array([0, 0, 0, 1, 1, 1.0])
    op = trend_operator(x, 0)
    lam = 0.1
    sol = solve(y, op, lam)
    ref, value = fused_lasso_oracle(y, lam * 5)  # D = 5 * D0 on this grid
    np.testing.assert_allclose(sol.beta, ref, atol=1e-8)
    assert len(np.unique(np.round(sol.beta, 8))) == 2
    assert objective(y, op, lam, sol.beta) == pytest.approx(value, abs=1e-8)


def test_constant_has_zero_lambda_max():
    assert compute_lambda_max(np.full(9, 2.0), trend_operator(np.linspace(0, 1, 9), 1)) == 0.0


@pytest.mark.parametrize("q", [0, 1, 2])
def test_polynomial_lambda_max_zero(q):
    x = np.linspace(0, 2, 12)
    y = np.polyval(np.arange(1.0, q + 2), x)
    assert compute_lambda_max(y, trend_operator(x, q)) <= 1e-10


def test_lambda_max_is_sharp():
    rng = np.random.default_rng(3)
    x = np.linspace(0, 1, 8)
    y = rng.normal(size=8)
    op = trend_operator(x, 1)
    lmax = compute_lambda_max(y, op)
    at = solve(y, op, lmax)
    below = solve(y, op, 0.99 * lmax)
    assert np.abs(at.a).max() <= 1e-6 * max(1.0, np.abs(at.a).max())
    assert np.abs(below.a).max() > 1e-6


def _f1_path(q, seed):
    from glober.evalbench import get_function

    rng = np.random.default_rng(seed)
    x = np.linspace(0, 1, 100)
    y = get_function("f1")(x) + 0.1 * rng.normal(size=100)
    return solve_path(y, trend_operator(x, q), grid_size=50)


def _monotone_fraction(path):
    counts = [np.count_nonzero(np.abs(s.a) > 1e-6 * max(1.0, np.abs(s.a).max())) for s in path]
    return sum(b >= a for a, b in zip(counts, counts[1:])) / (len(counts) - 1)


def test_path_shape():
    path = _f1_path(2, 11)
    assert len(path) == 50
    assert np.all(np.diff(path.grid) < 0)
    norms = trend_operator(np.linspace(0, 1, path[0].beta.size), 2).row_norms
    assert np.abs(path[0].a / norms).max() <= 1e-10
    assert all(s.kkt_residual <= 1e-8 for s in path)


def test_fused_path_support_is_monotone():
    assert _monotone_fraction(_f1_path(0, 11)) == 1.0


@pytest.mark.parametrize("seed", [0, 11])
def test_quadratic_path_support_mostly_grows(seed):
    # measured about 0.83 over ten seeds; entries can leave the support when neighbours merge
    assert _monotone_fraction(_f1_path(2, seed)) >= 0.75


@pytest.mark.xfail(strict=True, reason="quadratic trend filtering support grows in ~83% of "
                   "adjacent pairs on this data, below 90%; all path solutions are certified")
def test_quadratic_path_support_grows_ninety_percent():
    assert _monotone_fraction(_f1_path(2, 11)) >= 0.9


def test_noiseless_polynomial_path_has_no_knots():
    x = np.linspace(0, 1, 30)
    path = solve_path(1 + x - 2 * x**2, trend_operator(x, 2), grid_size=10)
    assert all(np.abs(s.a).max() <= 1e-8 for s in path)


def test_lambda_max_with_near_duplicate_points():
    # the banded factorization fails here; the least-squares fallback takes over
    rng = np.random.default_rng(4)
    x = np.sort(rng.random(30))
    x = np.sort(np.append(x, x[10] + 2e-7))
    y = rng.normal(size=31)
    op = trend_operator(x, 2)
    lmax = compute_lambda_max(y, op)
    sol = solve(y, op, lmax)
    assert sol.kkt_residual <= 1e-8
    np.testing.assert_allclose(sol.beta, _poly_fit(x, y, 2), atol=1e-6)


def test_path_continuity_under_refinement():
    rng = np.random.default_rng(5)
    x = np.linspace(0, 1, 40)
    y = np.sin(6 * x) + 0.1 * rng.normal(size=40)
    op = trend_operator(x, 1)

    def max_step(size):
        p = solve_path(y, op, grid_size=size, min_ratio=1e-2)
        return max(np.linalg.norm(a.beta - b.beta) for a, b in zip(p, p[1:]))

    coarse, fine = max_step(20), max_step(39)
    assert fine <= 0.75 * coarse


def test_lambda_grid_rejects():
    with pytest.raises(ValidationError):
        lambda_grid(1.0, 1)
    with pytest.raises(ValidationError):
        lambda_grid(1.0, 10, 1.5)


def test_warm_start_agrees_with_cold():
    rng = np.random.default_rng(8)
    x = np.sort(rng.random(40))
    y = np.cos(5 * x) + 0.05 * rng.normal(size=40)
    op = trend_operator(x, 2)
    lmax = compute_lambda_max(y, op)
    first = solve(y, op, 0.1 * lmax)
    warm = solve(y, op, 0.05 * lmax, warm_start=first)
    cold = solve(y, op, 0.05 * lmax)
    np.testing.assert_allclose(warm.beta, cold.beta, atol=1e-6)


def _random_instance(rng):
    n = int(rng.integers(5, 51))
    q = int(rng.integers(0, 3))
    if rng.random() < 0.5:
        x = np.linspace(0, 1, n)
    else:
        x = np.sort(rng.random(n))
        x = x[np.concatenate([[True], np.diff(x) > 1e-4])]
    n = x.size
    y = np.sin(4 * x) + rng.normal(scale=rng.choice([0.01, 0.1, 1.0]), size=n)
    op = trend_operator(x, q)
    lmax = compute_lambda_max(y, op)
    lam = lmax * 10 ** rng.uniform(-4, 0.2) if lmax > 0 else rng.random()
    return y, op, lam


def test_kkt_residual_random_instances():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        y, op, lam = _random_instance(rng)
        sol = solve(y, op, lam)
        res = kkt_residual(y, op, lam, sol.beta, sol.u)
        worst = max(worst, res)
    assert worst <= 1e-8


def test_matches_sign_pattern_oracle():
    rng = np.random.default_rng(77)
    for _ in range(50):
        n = int(rng.integers(2, 9))
        x = np.arange(n, dtype=float)  # unit gaps: D equals the plain first difference
        y = rng.normal(size=n) * rng.choice([0.1, 1.0, 3.0])
        op = trend_operator(x, 0)
        lam = float(rng.uniform(0.01, 1.2)) * max(compute_lambda_max(y, op), 0.1)
        sol = solve(y, op, lam)
        _, value = fused_lasso_oracle(y, lam)
        assert objective(y, op, lam, sol.beta) == pytest.approx(value, abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=3, max_size=25),
    st.integers(0, 2),
    st.floats(1e-3, 1.5),
)
def test_solution_is_certified(ys, q, frac):
    y = np.array(ys)
    if y.size < q + 2:
        return
    x = np.linspace(0, 1, y.size)
    op = trend_operator(x, q)
    lmax = compute_lambda_max(y, op)
    lam = frac * lmax
    sol = solve(y, op, lam)
    assert sol.kkt_residual <= 1e-8
    assert np.abs(sol.u).max() <= 1 + 1e-8  # box violation is part of the certified residual
    # the polynomial fit is feasible with zero penalty, so it bounds the optimum
    assert objective(y, op, lam, sol.beta) <= objective(y, op, lam, _poly_fit(x, y, q)) + 1e-8


def _uniform_f1(seed, n, sigma):
    from glober.evalbench import get_function

    rng = np.random.default_rng(seed)
    x = np.sort(rng.random(n))
    return x, get_function("f1")(x) + sigma * rng.normal(size=n)


def test_cycling_swaps_are_rescued():
    # closely spaced random points: bulk primal-dual swaps cycle at this lambda
    x, y = _uniform_f1(0, 200, 0.1)
    op = trend_operator(x, 2)
    path = solve_path(y, op, accept=1e-6)
    assert path.uncertified == []
    assert max(s.kkt_residual for s in path) <= 1e-8


@pytest.mark.slow
def test_precision_limited_path_is_flagged():
    # 375 random points, gaps down to 2.7e-7: D D^T is too ill-conditioned
    # for a float64 dual to certify 1e-8 at one of the penalties
    from glober.exceptions import ConvergenceError

    x, y = _uniform_f1(5, 375, 0.25)
    op = trend_operator(x, 2)
    with pytest.warns(RuntimeWarning, match="misses tol"):
        path = solve_path(y, op, accept=1e-6)
    assert path.uncertified
    for k, sol in enumerate(path):
        assert sol.kkt_residual <= (1e-8 if k not in path.uncertified else 1e-6)
        assert sol.converged == (k not in path.uncertified)
    k = path.uncertified[0]
    with pytest.raises(ConvergenceError) as info:
        solve(y, op, path.grid[k], warm_start=path[k - 1] if k else None, max_iter=2000)
    assert info.value.solution.kkt_residual <= 1e-6


def test_accept_below_tol_rejected():
    op = trend_operator(np.linspace(0, 1, 10), 1)
    with pytest.raises(ValidationError):
        solve_path(np.zeros(10), op, tol=1e-8, accept=1e-9)
