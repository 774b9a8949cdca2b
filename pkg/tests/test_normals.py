import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from graspaff.cloud import PointCloud
from graspaff.normals import NormalEstimator, angle_between, estimate_normals
from graspaff.spatial import build


def _plane(rng, n=2000):
    xy = rng.uniform(-0.1, 0.1, size=(n, 2))
    return np.column_stack([xy, np.zeros(n)])


def test_exact_plane_normals(rng):
    cloud = PointCloud(_plane(rng), viewpoint=(0, 0, 1))
    nf = estimate_normals(cloud, build(cloud), radius=0.02)
    assert nf.valid.all()
    np.testing.assert_allclose(nf.normals, np.tile([0, 0, 1.0], (len(cloud), 1)), atol=1e-6)


def test_plane_smallest_eigenvalue_negligible(rng):
    from graspaff.normals import neighborhood_covariances

    cloud = PointCloud(_plane(rng, 500))
    indptr, indices = build(cloud).radius_graph(0.03)
    ev = np.linalg.eigvalsh(neighborhood_covariances(cloud.points, indptr, indices))
    ok = ev[:, 2] > 0
    assert np.all(ev[ok, 0] <= 1e-12 * ev[ok, 2])


def test_cylinder_normals_radial(rng):
    # axis along y, radius 3 cm, upper half facing a sensor above
    n = 20_000
    phi = rng.uniform(0.15, math.pi - 0.15, n)
    y = rng.uniform(-0.1, 0.1, n)
    pts = np.column_stack([0.03 * np.cos(phi), y, 0.03 * np.sin(phi)])
    cloud = PointCloud(pts, viewpoint=(0, 0, 1))
    nf = estimate_normals(cloud, build(cloud), radius=0.006)
    radial = np.column_stack([np.cos(phi), np.zeros(n), np.sin(phi)])
    # points closer than the radius to the sampled border have one-sided neighborhoods
    inner = (np.abs(y) < 0.094) & (phi > 0.15 + 0.2) & (phi < math.pi - 0.35)
    err = np.degrees(angle_between(nf.normals[inner], radial[inner]))
    assert np.nanmax(err) < 3.0


def test_two_points_invalid():
    cloud = PointCloud(np.array([[0, 0, 0], [0.001, 0, 0]], dtype=float))
    nf = estimate_normals(cloud, build(cloud), radius=0.01)
    assert not nf.valid.any()
    assert np.isnan(nf.normals).all()


def test_collinear_invalid():
    pts = np.column_stack([np.linspace(0, 0.01, 10), np.zeros(10), np.zeros(10)])
    cloud = PointCloud(pts)
    assert not estimate_normals(cloud, build(cloud), radius=0.02).valid.any()


def test_spec_validation():
    cloud = PointCloud(np.zeros((3, 3)))
    idx = build(cloud)
    with pytest.raises(ValueError):
        estimate_normals(cloud, idx)
    with pytest.raises(ValueError):
        estimate_normals(cloud, idx, radius=0.1, k=5)
    with pytest.raises(ValueError):
        estimate_normals(cloud, idx, k=2)
    with pytest.raises(ValueError):
        estimate_normals(cloud, idx, radius=0)


def test_knn_neighborhoods(rng):
    cloud = PointCloud(_plane(rng, 500), viewpoint=(0, 0, -1))
    nf = estimate_normals(cloud, build(cloud), k=8)
    np.testing.assert_allclose(nf.normals, np.tile([0, 0, -1.0], (500, 1)), atol=1e-6)


def test_angle_between_basics():
    x, y = np.array([1.0, 0, 0]), np.array([0, 1.0, 0])
    assert angle_between(x, x) == 0
    assert angle_between(x, -x) == pytest.approx(math.pi)
    assert angle_between(x, y) == pytest.approx(math.pi / 2)
    # slightly over-unit dot products are clamped
    assert angle_between(x, x * (1 + 1e-12)) == 0


@given(st.integers(0, 2**32 - 1))
def test_unit_and_oriented(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(300, 3)) * [0.05, 0.05, 0.01]
    vp = rng.normal(size=3)
    cloud = PointCloud(pts, viewpoint=vp)
    nf = estimate_normals(cloud, build(cloud), radius=0.03)
    N = nf.normals[nf.valid]
    np.testing.assert_allclose(np.linalg.norm(N, axis=1), 1.0, atol=1e-6)
    assert np.all(np.einsum("ij,ij->i", N, vp - pts[nf.valid]) >= 0)


@given(st.integers(0, 2**32 - 1))
def test_rotation_equivariance(seed):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(400, 3)) * [0.05, 0.05, 0.005]
    vp = np.array([0.0, 0.0, 1.0])
    R = Rotation.random(random_state=seed % 2**31).as_matrix()
    t = rng.normal(size=3)
    a = PointCloud(pts, viewpoint=vp)
    b = a.transformed(R, t)
    na = estimate_normals(a, build(a), radius=0.03)
    nb = estimate_normals(b, build(b), radius=0.03)
    np.testing.assert_array_equal(na.valid, nb.valid)
    # neighborhoods whose normal is nearly tangent to the view ray may flip
    facing = np.abs(np.einsum("ij,ij->i", na.normals, vp - pts)) > 1e-3
    ok = na.valid & facing
    np.testing.assert_allclose(na.normals[ok] @ R.T, nb.normals[ok], atol=1e-5)


def test_estimator_api(rng):
    pts = _plane(rng, 300)
    est = NormalEstimator(radius=0.03, viewpoint=(0, 0, 2))
    out = est.fit_transform(pts)
    assert out.shape == (300, 3)
    assert est.valid_.all()
    assert est.get_params()["radius"] == 0.03
    np.testing.assert_allclose(est.transform(pts), out)
