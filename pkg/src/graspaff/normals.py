"""Local-PCA surface normals oriented toward the sensor."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .cloud import check_cloud
from .spatial import NeighborIndex

# a neighborhood whose middle eigenvalue is this small relative to the largest
# is treated as collinear
COLLINEAR_TOL = 1e-10
_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class NormalField:
    """Per-point unit normals; rows of invalid points are NaN."""

    normals: np.ndarray
    valid: np.ndarray
    radius: float | None = None
    k: int | None = None

    def __len__(self):
        return len(self.normals)


def angle_between(a, b):
    """Angle in radians between unit vectors (broadcasts over leading axes)."""
    dot = np.sum(np.asarray(a, dtype=np.float64) * np.asarray(b, dtype=np.float64), axis=-1)
    return np.arccos(np.clip(dot, -1.0, 1.0))


def neighborhood_covariances(points, indptr, indices):
    """Covariance matrix of every CSR neighborhood, shape (n, 3, 3).

    Each neighborhood is centred on its own query point before accumulating,
    which keeps the cancellation error independent of the distance to the
    origin.
    """
    n = len(indptr) - 1
    counts = np.diff(indptr)
    covs = np.zeros((n, 3, 3))
    iu = np.triu_indices(3)
    for lo in range(0, n, _CHUNK):
        hi = min(lo + _CHUNK, n)
        a, b = indptr[lo], indptr[hi]
        cnt = counts[lo:hi]
        rows = np.repeat(np.arange(lo, hi), cnt)
        diff = points[indices[a:b]] - points[rows]
        starts = indptr[lo:hi] - a
        s1 = np.add.reduceat(diff, starts, axis=0)
        outer = diff[:, iu[0]] * diff[:, iu[1]]
        s2 = np.add.reduceat(outer, starts, axis=0)
        mean = s1 / cnt[:, None]
        second = s2 / cnt[:, None]
        block = np.empty((hi - lo, 3, 3))
        block[:, iu[0], iu[1]] = second - mean[:, iu[0]] * mean[:, iu[1]]
        block[:, iu[1], iu[0]] = block[:, iu[0], iu[1]]
        covs[lo:hi] = block
    return covs


def estimate_normals(cloud, index, radius=None, k=None):
    """Estimate a normal per point from the covariance of its neighborhood.

    Exactly one of ``radius`` (meters) or ``k`` selects the neighborhood.
    The normal is the eigenvector of the smallest eigenvalue, flipped so that
    it points toward ``cloud.viewpoint``. Points with fewer than 3 neighbors
    (counting themselves) or a collinear neighborhood are marked invalid.
    """
    cloud = check_cloud(cloud)
    if (radius is None) == (k is None):
        raise ValueError("give exactly one of radius or k")
    if radius is not None:
        if not radius > 0:
            raise ValueError(f"radius must be > 0, got {radius}")
        indptr, indices = index.radius_graph(radius)
    else:
        if k < 3:
            raise ValueError(f"k must be >= 3, got {k}")
        indptr, indices = index.knn_graph(k)

    pts = cloud.points
    counts = np.diff(indptr)
    covs = neighborhood_covariances(pts, indptr, indices)
    evals, evecs = np.linalg.eigh(covs)
    normals = evecs[:, :, 0].copy()

    valid = (counts >= 3) & (evals[:, 2] > 0) & (evals[:, 1] > COLLINEAR_TOL * evals[:, 2])
    toward = cloud.viewpoint - pts
    flip = np.einsum("ij,ij->i", normals, toward) < 0
    normals[flip] *= -1.0
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    normals[~valid] = np.nan
    normals.setflags(write=False)
    valid.setflags(write=False)
    return NormalField(normals, valid, radius, k)


class NormalEstimator(TransformerMixin, BaseEstimator):
    """Transformer mapping an (n, 3) cloud to its (n, 3) normals.

    Parameters:
        radius: neighborhood radius in meters (ignored when ``k`` is set).
        k: use k-nearest neighborhoods instead of a radius.
        viewpoint: sensor origin; defaults to the cloud's own viewpoint
            (the origin for plain arrays).
        leaf_size: KD-tree leaf size.

    Invalid points come back as NaN rows; ``valid_`` holds the mask of the
    last transformed cloud.
    """

    def __init__(self, radius=0.01, k=None, viewpoint=None, leaf_size=16):
        self.radius = radius
        self.k = k
        self.viewpoint = viewpoint
        self.leaf_size = leaf_size

    def fit(self, X, y=None):
        cloud = check_cloud(X, self.viewpoint)
        self.n_features_in_ = 3
        self.field_ = self._estimate(cloud)
        self.valid_ = self.field_.valid
        return self

    def transform(self, X):
        cloud = check_cloud(X, self.viewpoint)
        field = self._estimate(cloud)
        self.valid_ = field.valid
        return np.array(field.normals)

    def fit_transform(self, X, y=None, **fit_params):
        return np.array(self.fit(X).field_.normals)

    def _estimate(self, cloud):
        index = NeighborIndex(cloud, leaf_size=self.leaf_size)
        if self.k is not None:
            return estimate_normals(cloud, index, k=self.k)
        return estimate_normals(cloud, index, radius=self.radius)
