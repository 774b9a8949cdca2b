import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from graspaff.cloud import PointCloud
from graspaff.spatial import NeighborIndex, build
from oracles import linear_radius, sorted_knn


def test_empty_cloud_rejected():
    with pytest.raises(ValueError):
        build(PointCloud(np.zeros((0, 3))))


def test_single_point():
    idx = build(PointCloud(np.zeros((1, 3))))
    assert idx.radius_neighbors([0, 0, 0], 0.1).tolist() == [0]
    assert idx.radius_neighbors([1, 0, 0], 0.1).tolist() == []


def test_grid_small_radius_returns_self():
    g = np.stack(np.meshgrid(*[np.arange(5) * 0.01] * 3), -1).reshape(-1, 3)
    idx = build(PointCloud(g))
    for i in (0, 17, 124):
        assert idx.radius_neighbors(g[i], 0.005).tolist() == [i]


def test_large_radius_returns_everything(rng):
    pts = rng.uniform(size=(300, 3))
    idx = build(PointCloud(pts))
    diag = np.linalg.norm(pts.max(0) - pts.min(0))
    assert len(idx.radius_neighbors(pts.mean(0), diag)) == 300


def test_radius_rejects_nonpositive():
    idx = build(PointCloud(np.zeros((2, 3))))
    with pytest.raises(ValueError):
        idx.radius_neighbors([0, 0, 0], 0)
    with pytest.raises(ValueError):
        idx.radius_graph(-1)


def test_radius_parity_with_linear_scan_100_instances():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n = int(rng.integers(1, 1000))
        pts = rng.uniform(-1, 1, size=(n, 3))
        idx = build(PointCloud(pts))
        q = rng.uniform(-1, 1, size=3)
        r = float(rng.uniform(0.01, 0.8))
        np.testing.assert_array_equal(idx.radius_neighbors(q, r), linear_radius(pts, q, r))


def test_radius_graph_rows_match_queries(rng):
    pts = rng.uniform(size=(400, 3))
    idx = build(PointCloud(pts))
    indptr, indices = idx.radius_graph(0.15)
    for i in range(0, 400, 37):
        np.testing.assert_array_equal(indices[indptr[i]:indptr[i + 1]],
                                      linear_radius(pts, pts[i], 0.15))
    assert idx.radius_graph(0.15)[0] is indptr


def test_knn_matches_sort_oracle(rng):
    pts = rng.uniform(size=(1000, 3))
    idx = build(PointCloud(pts))
    for q in rng.uniform(size=(20, 3)):
        np.testing.assert_array_equal(idx.k_nearest(q, 5), sorted_knn(pts, q, 5))


def test_knn_edge_cases():
    pts = np.array([[0, 0, 0], [1, 0, 0], [-1, 0, 0], [2, 0, 0]], dtype=float)
    idx = build(PointCloud(pts))
    assert idx.k_nearest([1, 0, 0], 1).tolist() == [1]
    # 1 and 2 tie at distance 1 from the origin; lower index first
    assert idx.k_nearest([0, 0, 0], 2).tolist() == [0, 1]
    assert sorted(idx.k_nearest([0, 0, 0], 10).tolist()) == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        idx.k_nearest([0, 0, 0], 0)


def test_knn_graph_contains_self(rng):
    pts = rng.uniform(size=(50, 3))
    indptr, indices = NeighborIndex(PointCloud(pts)).knn_graph(4)
    for i in range(50):
        assert i in indices[indptr[i]:indptr[i + 1]]


@given(st.integers(0, 2**32 - 1), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_radius_monotone_and_symmetric(seed, r1, r2):
    r1, r2 = sorted((r1, r2))
    pts = np.random.default_rng(seed).uniform(size=(80, 3))
    idx = build(PointCloud(pts))
    i = seed % 80
    small = set(idx.radius_neighbors(pts[i], r1).tolist())
    big = set(idx.radius_neighbors(pts[i], r2).tolist())
    assert small <= big
    for j in big:
        assert i in idx.radius_neighbors(pts[j], r2)
