"""Exact fixed-radius and k-nearest neighbor queries.

The tree is scipy's cKDTree (an axis-aligned recursive partition with exact
search). Results are post-processed so that they are deterministic: radius
results come back sorted by index and k-nearest ties are broken by index.
"""
from __future__ import annotations

import itertools

import numpy as np
from scipy.spatial import cKDTree

from .cloud import check_cloud


class NeighborIndex:
    """Read-only neighbor index over a point cloud.

    Safe to query from several threads once built. ``radius_graph`` results
    are cached per radius since normals and region growing share one scale.
    """

    def __init__(self, cloud, leaf_size=16, workers=1):
        cloud = check_cloud(cloud)
        if len(cloud) == 0:
            raise ValueError("cannot build a neighbor index over an empty cloud")
        self.cloud = cloud
        self.leaf_size = int(leaf_size)
        self.workers = workers
        self._tree = cKDTree(cloud.points, leafsize=self.leaf_size, balanced_tree=True,
                             compact_nodes=True, copy_data=False)
        self._graphs = {}

    def __len__(self):
        return len(self.cloud)

    @property
    def points(self):
        return self.cloud.points

    def radius_neighbors(self, q, r):
        """Indices ``i`` with ``|q - p_i| <= r``, sorted ascending."""
        if not r > 0:
            raise ValueError(f"radius must be > 0, got {r}")
        found = self._tree.query_ball_point(np.asarray(q, dtype=np.float64), r,
                                            return_sorted=True)
        return np.asarray(found, dtype=np.int64)

    def k_nearest(self, q, k):
        """The ``k`` closest indices to ``q`` by distance, ties by lower index."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        q = np.asarray(q, dtype=np.float64)
        n = len(self)
        k = min(int(k), n)
        dist, _ = self._tree.query(q, k=k)
        kth = float(np.max(dist))
        # widen slightly so every point tied with the k-th distance is considered
        cand = self._tree.query_ball_point(q, kth * (1 + 1e-9) + 1e-12)
        cand = np.asarray(cand, dtype=np.int64)
        d2 = np.sum((self.points[cand] - q) ** 2, axis=1)
        order = np.lexsort((cand, d2))
        return cand[order[:k]]

    def knn_graph(self, k):
        """k-nearest neighborhoods of every point as CSR arrays (itself included)."""
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        k = min(int(k), len(self))
        _, nbrs = self._tree.query(self.points, k=k, workers=self.workers)
        nbrs = np.sort(np.asarray(nbrs, dtype=np.int64).reshape(len(self), k), axis=1)
        indptr = np.arange(0, len(self) * k + 1, k, dtype=np.int64)
        return indptr, nbrs.ravel()

    def radius_graph(self, r):
        """All radius neighborhoods as CSR arrays ``(indptr, indices)``.

        Row ``i`` lists the neighbors of point ``i`` (itself included),
        sorted ascending.
        """
        if not r > 0:
            raise ValueError(f"radius must be > 0, got {r}")
        key = float(r)
        if key not in self._graphs:
            lists = self._tree.query_ball_point(self.points, key, return_sorted=True,
                                                workers=self.workers)
            counts = np.fromiter((len(x) for x in lists), dtype=np.int64, count=len(lists))
            indptr = np.zeros(len(lists) + 1, dtype=np.int64)
            np.cumsum(counts, out=indptr[1:])
            indices = np.fromiter(itertools.chain.from_iterable(lists), dtype=np.int64,
                                  count=int(indptr[-1]))
            indptr.setflags(write=False)
            indices.setflags(write=False)
            self._graphs[key] = (indptr, indices)
        return self._graphs[key]


def build(cloud, leaf_size=16, workers=1):
    """Build a :class:`NeighborIndex`; raises ``ValueError`` on an empty cloud."""
    return NeighborIndex(cloud, leaf_size=leaf_size, workers=workers)


__all__ = ["NeighborIndex", "build"]
