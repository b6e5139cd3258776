import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glober.exceptions import ValidationError
from glober.penalty import fused_difference, integer_difference, trend_operator


@pytest.mark.parametrize(
    "n, expected",
    [
        (4, [[-1, 1, 0, 0], [0, -1, 1, 0], [0, 0, -1, 1]]),
        (2, [[-1, 1]]),
    ],
)
def test_fused_difference(n, expected):
    np.testing.assert_array_equal(fused_difference(n).todense(), expected)


def test_fused_difference_annihilates_constants():
    np.testing.assert_array_equal(fused_difference(4).apply(np.full(4, 3.0)), np.zeros(3))


def test_fused_difference_too_small():
    with pytest.raises(ValidationError):
        fused_difference(1)


def test_even_grid_q0_scales_by_gap():
    h = 0.25
    x = np.arange(6) * h
    np.testing.assert_allclose(trend_operator(x, 0).todense(), fused_difference(6).todense() / h)


def test_uneven_q0_by_hand():
    op = trend_operator([0.0, 0.5, 2.0], 0)
    np.testing.assert_allclose(op.todense(), [[-2, 2, 0], [0, -2 / 3, 2 / 3]])


def test_even_grid_matches_integer_differences():
    h = 0.1
    x = np.arange(9) * h
    for q in range(4):
        np.testing.assert_allclose(
            trend_operator(x, q).todense(),
            integer_difference(9, q + 1).todense() / h ** (q + 1),
            rtol=1e-10,
        )


@pytest.mark.parametrize("weighting", ["divided", "gaps"])
def test_weightings_agree_on_even_grid(weighting):
    x = np.linspace(0, 1, 11)
    ref = trend_operator(x, 2, "divided").todense()
    np.testing.assert_allclose(trend_operator(x, 2, weighting).todense(), ref, rtol=1e-10)


def test_transpose_consistency():
    rng = np.random.default_rng(1)
    x = np.sort(rng.random(12))
    op = trend_operator(x, 2)
    v = rng.normal(size=op.n_rows)
    np.testing.assert_allclose(op.apply_t(v), op.todense().T @ v, atol=1e-9)
    np.testing.assert_allclose(op.row_norms, np.abs(op.todense()).sum(axis=1))


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-5, 5), min_size=6, max_size=30, unique=True),
    st.integers(0, 3),
)
def test_polynomials_are_annihilated(xs, q):
    x = np.sort(np.array(xs))
    if np.diff(x).min() < 1e-3:
        x = np.linspace(-5, 5, x.size)
    if x.size < q + 2:
        return
    op = trend_operator(x, q)
    coeffs = np.arange(1, q + 2, dtype=float)
    y = np.polyval(coeffs, x)
    # compare against the operator's own scale
    scale = np.abs(op.todense()).sum(axis=1).max() * np.abs(y).max()
    assert np.abs(op.apply(y)).max() <= 1e-10 * max(1.0, scale)


def test_squares_annihilated_q2():
    x = np.array([0.0, 0.1, 0.35, 0.4, 0.8, 1.3, 2.0])
    assert np.abs(trend_operator(x, 2).apply(x**2)).max() <= 1e-10
