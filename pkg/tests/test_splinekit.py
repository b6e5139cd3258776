import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glober.exceptions import DomainError, KnotBoundsError, KnotOrderError, SplineOrderError
from glober.splinekit import (
    basis_rows,
    build_augmented_knots,
    design_matrix,
    eval_bspline,
    spline_values,
    tensor_design_matrix,
)

from oracles import piecewise_design

F1_KNOTS = (0.1, 0.27, 0.745)


@pytest.mark.parametrize(
    "interior, order, expected",
    [
        (F1_KNOTS, 3, [0, 0, 0, 0.1, 0.27, 0.745, 1, 1, 1]),
        ((), 1, [0, 1]),
        ((0.5,), 2, [0, 0, 0.5, 1, 1]),
    ],
)
def test_augmented_knots(interior, order, expected):
    kv = build_augmented_knots(interior, order, (0.0, 1.0))
    np.testing.assert_array_equal(kv.augmented, expected)
    assert kv.n_basis == len(interior) + order


@pytest.mark.parametrize(
    "interior, order, bounds, exc",
    [
        ((0.3, 0.2), 3, (0, 1), KnotOrderError),
        ((0.3, 0.3), 3, (0, 1), KnotOrderError),
        ((0.0, 0.5), 3, (0, 1), KnotBoundsError),
        ((0.5,), 3, (1, 0), KnotBoundsError),
        ((0.5,), 0, (0, 1), SplineOrderError),
    ],
)
def test_augmented_knots_rejects(interior, order, bounds, exc):
    with pytest.raises(exc):
        build_augmented_knots(interior, order, bounds)


def test_eval_bspline_indicator():
    kv = build_augmented_knots((), 1, (0.0, 1.0))
    assert eval_bspline(kv, 0, 1, 0.3) == 1.0
    with pytest.raises(DomainError):
        eval_bspline(kv, 0, 1, 1.2)


def test_eval_bspline_closed_at_upper_bound():
    kv = build_augmented_knots(F1_KNOTS, 3, (0.0, 1.0))
    assert eval_bspline(kv, kv.n_basis - 1, 3, 1.0) == pytest.approx(1.0)


def test_design_matrix_constant_basis():
    np.testing.assert_array_equal(
        design_matrix(build_augmented_knots((), 1, (0, 1)), np.linspace(0, 1, 5)),
        np.ones((5, 1)),
    )


def test_design_matrix_f1_partition_of_unity():
    kv = build_augmented_knots(F1_KNOTS, 3, (0.0, 1.0))
    b = design_matrix(kv, np.linspace(0, 1, 201))
    assert b.shape == (201, 6)
    np.testing.assert_allclose(b.sum(axis=1), 1.0, atol=1e-12)


def test_design_matrix_matches_recursion():
    kv = build_augmented_knots((0.2, 0.5, 0.55), 4, (0.0, 1.0))
    x = np.array([0.0, 0.1, 0.2, 0.52, 0.9, 1.0])
    b = design_matrix(kv, x)
    ref = np.array([[eval_bspline(kv, i, 4, v) for i in range(kv.n_basis)] for v in x])
    np.testing.assert_allclose(b, ref, atol=1e-14)


def test_design_matrix_out_of_domain():
    kv = build_augmented_knots((0.5,), 2, (0.0, 1.0))
    with pytest.raises(DomainError, match="index 1"):
        design_matrix(kv, [0.5, -0.01])


def test_tensor_design_shapes():
    rng = np.random.default_rng(0)
    b2 = rng.random((4, 3))
    assert tensor_design_matrix(rng.random((3, 2)), b2).shape == (12, 6)
    block = tensor_design_matrix(np.eye(2), b2)
    np.testing.assert_array_equal(block[:4, :3], b2)
    np.testing.assert_array_equal(block[4:, 3:], b2)
    assert not block[:4, 3:].any() and not block[4:, :3].any()


def test_spline_values_matches_design():
    kv = build_augmented_knots(F1_KNOTS, 3, (0.0, 1.0))
    coef = np.array([0, -2.5, 0, 0, 4.3, 0])
    x = np.linspace(0, 1, 33)
    np.testing.assert_allclose(spline_values(kv, coef, x), design_matrix(kv, x) @ coef, atol=1e-14)


knot_vectors = st.tuples(
    st.lists(st.floats(0.01, 0.99), min_size=0, max_size=8, unique=True),
    st.integers(1, 4),
)


@settings(max_examples=60, deadline=None)
@given(knot_vectors, st.integers(0, 2**31))
def test_partition_of_unity(spec, seed):
    interior, order = spec
    interior = np.unique(np.round(interior, 6))
    kv = build_augmented_knots(interior, order, (0.0, 1.0))
    x = np.random.default_rng(seed).random(200)
    x = np.concatenate([x, interior, [0.0, 1.0]])
    b = design_matrix(kv, x)
    np.testing.assert_allclose(b.sum(axis=1), 1.0, atol=1e-12)
    assert (b >= -1e-15).all()


@settings(max_examples=40, deadline=None)
@given(knot_vectors, st.integers(0, 2**31))
def test_matches_piecewise_expansion(spec, seed):
    interior, order = spec
    order = min(order, 3)
    interior = np.unique(np.round(interior, 6))
    kv = build_augmented_knots(interior, order, (0.0, 1.0))
    x = np.concatenate([np.random.default_rng(seed).random(50), [0.0, 1.0]])
    np.testing.assert_allclose(design_matrix(kv, x), piecewise_design(kv.augmented, order, x),
                               atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(knot_vectors)
def test_basis_rows_local_support(spec):
    interior, order = spec
    kv = build_augmented_knots(np.unique(np.round(interior, 6)), order, (0.0, 1.0))
    first, values = basis_rows(kv, np.linspace(0, 1, 40))
    assert values.shape == (40, order)
    assert (first >= 0).all() and (first + order <= kv.n_basis).all()
