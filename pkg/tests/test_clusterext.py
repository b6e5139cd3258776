import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glober.clusterext import (
    ScatteredDataset,
    _search,
    cluster_knots,
    default_k,
    ebic_nd,
    elbow,
    fit_nd,
    fit_nd_knots,
    kmeans,
    kmeans_1d_exact,
    knots_per_dimension,
    select_nd,
)
from glober.evalbench import F2_KNOTS, get_function
from glober.exceptions import ValidationError
from glober.knotsel1d import PathConfig

FAST = PathConfig(grid_size=15)


def _uniform(n, d, seed):
    return np.random.default_rng(seed).random((n, d))


@pytest.mark.parametrize("n, k", [(1600, 64), (25, 1), (10, 1), (99, 3)])
def test_default_k(n, k):
    assert default_k(n) == k


def test_kmeans_separates_clouds():
    rng = np.random.default_rng(0)
    a = rng.normal(0, 0.1, size=(30, 2))
    b = rng.normal(5, 0.1, size=(40, 2))
    labels, centers = kmeans(np.vstack([a, b]), 2, seed=3)
    assert len(set(labels[:30])) == 1 and len(set(labels[30:])) == 1
    assert labels[0] != labels[-1]


def test_kmeans_single_cluster():
    labels, centers = kmeans(_uniform(50, 3, 1), 1)
    assert (labels == 0).all()
    np.testing.assert_allclose(centers[0], _uniform(50, 3, 1).mean(axis=0))


def test_kmeans_deterministic_and_nonempty():
    pts = _uniform(300, 2, 5)
    a, _ = kmeans(pts, 12, seed=9)
    b, _ = kmeans(pts, 12, seed=9)
    np.testing.assert_array_equal(a, b)
    assert np.bincount(a, minlength=12).min() > 0


def test_kmeans_rejects_bad_k():
    with pytest.raises(ValidationError):
        kmeans(_uniform(5, 2, 0), 6)


@pytest.mark.parametrize(
    "wss, expected",
    [
        ((100, 10, 9, 8.5), 2),
        ((10, 8, 6, 4, 2), 2),
        ((50, 40, 5, 4, 3.8), 3),
        ((5, 1), 1),
        ((5,), 1),
    ],
)
def test_elbow(wss, expected):
    assert elbow(wss) == expected


def test_cluster_knots_medians():
    summary = cluster_knots([0.49, 0.50, 0.51, 0.90])
    assert summary.cluster_count == 2
    np.testing.assert_allclose(summary.representatives, [0.50, 0.90])


def test_cluster_knots_empty():
    summary = cluster_knots([])
    assert summary.cluster_count == 0 and summary.representatives.size == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=8), st.integers(1, 4))
def test_kmeans_1d_exact_is_optimal(values, c):
    v = np.array(values)
    c = min(c, v.size)
    labels, wss = kmeans_1d_exact(v, c)
    assert len(set(labels)) <= c
    best = np.inf
    for assign in itertools.product(range(c), repeat=v.size):
        a = np.array(assign)
        cost = sum(((v[a == g] - v[a == g].mean()) ** 2).sum() for g in range(c) if (a == g).any())
        best = min(best, cost)
    assert wss == pytest.approx(best, abs=1e-12)


def test_scattered_dataset_validation():
    with pytest.raises(ValidationError):
        ScatteredDataset(_uniform(30, 1, 0), np.zeros(30))
    with pytest.raises(ValidationError):
        ScatteredDataset(_uniform(10, 2, 0), np.zeros(10))
    pts = _uniform(30, 2, 0)
    pts[1] = pts[0]
    with pytest.raises(ValidationError, match="duplicate"):
        ScatteredDataset(pts, np.zeros(30))


def test_flat_dimension_has_no_representatives():
    pts = _uniform(400, 2, 2)
    y = 1 + pts[:, 0] - 0.5 * pts[:, 0] ** 2
    data = ScatteredDataset(pts, y)
    dc = knots_per_dimension(data, 1, 2, FAST)
    # the strongest entry is knot-free in every cluster; weaker entries can pick up
    # the spread of coordinate 0 inside a cluster, which EBIC then rejects
    assert dc.knot_sets[0].size == 0
    assert dc.entries[0].raw_knots.size == 0
    assert select_nd(data, 2, FAST).model.n_knots == (0, 0)


def test_additive_polynomial_fits_exactly():
    pts = _uniform(300, 2, 3)
    y = pts[:, 0] ** 2 - 2 * pts[:, 1] + 0.5 * pts[:, 1] ** 2
    data = ScatteredDataset(pts, y)
    model = fit_nd(data, 2, FAST)
    assert model.n_knots == (0, 0)
    assert model.ss <= 1e-10 * np.dot(y, y)


@pytest.mark.parametrize("sigma", [0.0, 0.01])
def test_third_dimension_ignored(sigma):
    rng = np.random.default_rng(4)
    pts = rng.random((500, 3))
    y = np.maximum(pts[:, 0] - 0.5, 0) ** 2 * 4 + np.sin(3 * pts[:, 1])
    y = y + sigma * rng.normal(size=500)
    sel = select_nd(ScatteredDataset(pts, y), 2, FAST)
    assert sel.model.n_knots[2] == 0
    assert sel.dims[2].knot_sets[0].size == 0


def test_exact_recovery_f2_scattered():
    pts = _uniform(400, 2, 6)
    y = get_function("f2")(pts)
    model = fit_nd_knots(ScatteredDataset(pts, y), F2_KNOTS, 2, bounds=((0, 1), (0, 1)))
    assert model.ss <= 1e-10 * np.dot(y, y)


def test_exact_recovery_3d():
    from glober.splinekit import build_augmented_knots, design_matrix

    pts = _uniform(600, 3, 7)
    knots = ([0.3], [0.5, 0.8], [])
    kvs = [build_augmented_knots(k, 3, (0, 1)) for k in knots]
    gamma = np.random.default_rng(8).normal(size=tuple(kv.n_basis for kv in kvs))
    bs = [design_matrix(kv, pts[:, j]) for j, kv in enumerate(kvs)]
    y = np.einsum("ni,nj,nk,ijk->n", *bs, gamma)
    model = fit_nd_knots(ScatteredDataset(pts, y), knots, 2, bounds=((0, 1),) * 3)
    assert model.ss <= 1e-10 * np.dot(y, y)
    np.testing.assert_allclose(model.predict(pts[:5]), y[:5], atol=1e-9)


def test_ebic_nd_overparameterized():
    from glober.exceptions import OverparameterizedError

    data = ScatteredDataset(_uniform(30, 2, 0), np.zeros(30))
    with pytest.raises(OverparameterizedError):
        ebic_nd(data, (np.linspace(0.1, 0.9, 5), np.linspace(0.1, 0.9, 5)))


def test_search_exhaustive_and_coordinate_agree_on_separable_score():
    target = (3, 7, 1)

    def score(cell):
        return (sum((a - b) ** 2 for a, b in zip(cell, target)), 0)

    best_ex, how_ex = _search(score, (5, 9, 4), 10_000)
    best_cd, how_cd = _search(score, (5, 9, 4), 10)
    assert how_ex == "exhaustive" and how_cd == "coordinate"
    assert best_ex[1] == best_cd[1] == target


def test_search_skips_none_cells():
    def score(cell):
        return None if sum(cell) > 2 else (-sum(cell), 0)

    best, _ = _search(score, (4, 4), 100)
    assert sum(best[1]) == 2
