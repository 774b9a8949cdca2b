"""Point cloud container and pre-processing filters."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _frozen(a, dtype=None):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable indexed set of 3D points in the sensor frame (meters).

    Attributes:
        points: (n, 3) float64 coordinates. Row ``i`` is point ``i`` for the
            lifetime of the cloud; every downstream label refers to it.
        colors: optional (n, 3) uint8 RGB.
        viewpoint: sensor origin, used to orient normals.
        width, height: organisation declared by the source file
            (``height == 1`` for unorganised clouds).
        dropped: number of non-finite rows removed at ingest.
        source_index: for each kept row, its row number in the source file.
    """

    points: np.ndarray
    colors: np.ndarray | None = None
    viewpoint: np.ndarray = field(default_factory=lambda: np.zeros(3))
    width: int | None = None
    height: int = 1
    dropped: int = 0
    source_index: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("points contain non-finite coordinates; use PointCloud.from_array")
        object.__setattr__(self, "points", _frozen(pts))
        if self.colors is not None:
            cols = np.asarray(self.colors)
            if cols.shape != pts.shape:
                raise ValueError("colors must match points shape")
            object.__setattr__(self, "colors", _frozen(cols, np.uint8))
        vp = np.asarray(self.viewpoint, dtype=np.float64).reshape(3)
        object.__setattr__(self, "viewpoint", _frozen(vp))
        if self.width is None:
            object.__setattr__(self, "width", len(pts))
        if self.source_index is not None:
            object.__setattr__(self, "source_index", _frozen(self.source_index, np.int64))

    @classmethod
    def from_array(cls, points, colors=None, viewpoint=(0.0, 0.0, 0.0), **meta):
        """Build a cloud from raw rows, dropping any row with a NaN/Inf coordinate."""
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        keep = np.isfinite(pts).all(axis=1)
        dropped = int((~keep).sum())
        cols = None if colors is None else np.asarray(colors)[keep]
        src = np.flatnonzero(keep) if dropped else None
        return cls(pts[keep], cols, viewpoint, dropped=dropped, source_index=src, **meta)

    def __len__(self):
        return len(self.points)

    @property
    def is_organized(self):
        return self.height > 1

    def subset(self, indices):
        """New unorganised cloud holding rows ``indices`` (in that order)."""
        idx = np.asarray(indices, dtype=np.int64)
        cols = None if self.colors is None else self.colors[idx]
        return PointCloud(self.points[idx], cols, self.viewpoint)

    def transformed(self, rotation, translation):
        """Apply ``x -> R x + t`` to points and viewpoint."""
        R = np.asarray(rotation, dtype=np.float64)
        t = np.asarray(translation, dtype=np.float64)
        return PointCloud(
            self.points @ R.T + t,
            self.colors,
            R @ self.viewpoint + t,
            width=self.width,
            height=self.height,
        )


def check_cloud(X, viewpoint=None):
    """Coerce ``X`` (PointCloud or (n, 3) array-like) to a PointCloud.

    Non-finite rows of raw arrays are dropped. ``viewpoint`` overrides the
    sensor origin when given.
    """
    if isinstance(X, PointCloud):
        if viewpoint is None:
            return X
        return PointCloud(X.points, X.colors, viewpoint, width=X.width, height=X.height,
                          dropped=X.dropped, source_index=X.source_index)
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) point array, got shape {arr.shape}")
    return PointCloud.from_array(arr, viewpoint=(0.0, 0.0, 0.0) if viewpoint is None else viewpoint)


@dataclass(frozen=True)
class CloudFilterConfig:
    """Pre-processing applied before normal estimation.

    ``voxel_leaf`` and ``smoothing_radius`` are in meters, 0 disables the
    stage. ``max_displacement`` clamps how far smoothing may move a point
    (0 means unclamped).
    """

    voxel_leaf: float = 0.0
    smoothing_radius: float = 0.0
    max_displacement: float = 0.0

    def __post_init__(self):
        for name in ("voxel_leaf", "smoothing_radius", "max_displacement"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")

    def apply(self, cloud):
        if self.voxel_leaf > 0:
            cloud = voxel_downsample(cloud, self.voxel_leaf)
        if self.smoothing_radius > 0:
            cloud = smooth(cloud, self)
        return cloud


def voxel_downsample(cloud, leaf):
    """Replace the points of every occupied voxel by their centroid.

    Output rows are ordered by voxel key, so the result is deterministic.
    """
    if not leaf > 0:
        raise ValueError(f"leaf must be > 0, got {leaf}")
    if len(cloud) == 0:
        return cloud
    keys = np.floor(cloud.points / leaf).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    sums = np.zeros((len(counts), 3))
    np.add.at(sums, inverse, cloud.points)
    centroids = sums / counts[:, None]
    colors = None
    if cloud.colors is not None:
        csum = np.zeros((len(counts), 3))
        np.add.at(csum, inverse, cloud.colors.astype(np.float64))
        colors = np.rint(csum / counts[:, None]).astype(np.uint8)
    return PointCloud(centroids, colors, cloud.viewpoint)


def smooth(cloud, cfg):
    """Move each point to the mean of its radius neighborhood.

    Point count and order are preserved. A point with no other neighbor
    inside the radius stays where it is.
    """
    from .spatial import build

    radius = cfg.smoothing_radius if isinstance(cfg, CloudFilterConfig) else float(cfg)
    if not radius > 0:
        raise ValueError(f"smoothing radius must be > 0, got {radius}")
    if len(cloud) == 0:
        return cloud
    index = build(cloud)
    indptr, indices = index.radius_graph(radius)
    counts = np.diff(indptr)
    sums = np.add.reduceat(cloud.points[indices], indptr[:-1], axis=0)
    means = sums / counts[:, None]
    shift = means - cloud.points
    clamp = getattr(cfg, "max_displacement", 0.0)
    if clamp > 0:
        norm = np.linalg.norm(shift, axis=1)
        scale = np.minimum(1.0, clamp / np.maximum(norm, 1e-300))
        shift *= scale[:, None]
    return PointCloud(cloud.points + shift, cloud.colors, cloud.viewpoint,
                      width=cloud.width, height=cloud.height)
