"""Region growing with dual smoothness thresholds and edge points.

A region starts at an unlabeled seed ``s`` and visits every neighbor ``p``
within ``radius_r``. With ``theta`` the angle between the normals of ``s``
and ``p``:

* ``theta < theta_low``: ``p`` joins the region and becomes a seed;
* ``theta > theta_high``: ``p`` is left alone;
* otherwise ``p`` joins the region, and becomes a seed only when ``s`` is
  not an edge point.

``s`` is an edge point when more than a fraction ``edge_ratio_k`` of its
valid neighbors deviate from it by more than ``theta_high``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin

from .cloud import check_cloud
from .normals import angle_between, estimate_normals
from .spatial import NeighborIndex

UNLABELED = -1


@dataclass(frozen=True)
class SegmentationConfig:
    """Thresholds for region growing. Angles are radians, lengths meters.

    ``mode="single"`` runs classic single-threshold region growing with the
    threshold ``theta_high`` (``theta_low`` is ignored and edge points are
    not used); it exists for ablations.
    """

    theta_low: float = math.radians(4.0)
    theta_high: float = math.radians(20.0)
    edge_ratio_k: float = 0.4
    radius_r: float = 0.01
    min_segment_size: int = 50
    mode: str = "dual"

    def __post_init__(self):
        if self.mode not in ("dual", "single"):
            raise ValueError(f"mode must be 'dual' or 'single', got {self.mode!r}")
        if not 0 < self.theta_high < math.pi:
            raise ValueError(f"theta_high must lie in (0, pi), got {self.theta_high}")
        if self.mode == "dual" and not 0 < self.theta_low < self.theta_high:
            raise ValueError(
                f"need 0 < theta_low < theta_high, got {self.theta_low} and {self.theta_high}")
        if not 0 < self.edge_ratio_k < 1:
            raise ValueError(f"edge_ratio_k must lie in (0, 1), got {self.edge_ratio_k}")
        if not self.radius_r > 0:
            raise ValueError(f"radius_r must be > 0, got {self.radius_r}")
        if self.min_segment_size < 1:
            raise ValueError("min_segment_size must be >= 1")

    @classmethod
    def from_degrees(cls, theta_low=4.0, theta_high=20.0, **kw):
        return cls(math.radians(theta_low), math.radians(theta_high), **kw)

    @classmethod
    def single(cls, theta, **kw):
        """Single-threshold config growing through every angle below ``theta`` (radians)."""
        return cls(theta_low=theta, theta_high=theta, mode="single", **kw)


@dataclass(frozen=True)
class SegmentRecord:
    label: int
    members: np.ndarray

    @property
    def size(self):
        return len(self.members)


@dataclass(frozen=True, eq=False)
class Segmentation:
    """Result of :func:`grow_regions`.

    Attributes:
        labels: per-point segment label, ``UNLABELED`` (-1) otherwise.
        edge_points: sorted indices of all edge points.
        segments: one record per surviving label, label order.
        edge_ratio: per-point fraction of valid neighbors beyond
            ``theta_high`` (0 where undefined).
        parent: for each labeled point, the seed that labeled it (-1 for
            region roots and unlabeled points).
    """

    labels: np.ndarray
    edge_points: np.ndarray
    segments: list = field(default_factory=list)
    edge_ratio: np.ndarray | None = None
    parent: np.ndarray | None = None
    config: SegmentationConfig | None = None

    @property
    def n_segments(self):
        return len(self.segments)

    def members(self, label):
        return self.segments[label].members


def is_edge_point(s, neighbors, normals, cfg):
    """Decide whether seed ``s`` is an edge point.

    ``neighbors`` is the radius neighborhood of ``s``; ``s`` itself and
    neighbors without a valid normal are not counted. Returns
    ``(is_edge, ratio)``; a seed without valid neighbors is not an edge
    point and reports ratio 0.
    """
    nb = np.asarray(neighbors, dtype=np.int64)
    nb = nb[(nb != s) & normals.valid[nb]]
    if len(nb) == 0:
        return False, 0.0
    theta = angle_between(normals.normals[s], normals.normals[nb])
    ratio = float(np.count_nonzero(theta > cfg.theta_high)) / len(nb)
    return ratio > cfg.edge_ratio_k, ratio


def edge_ratios(normals, indptr, indices, theta_high):
    """Vectorised edge ratio for every point plus per-neighbor angles.

    Returns ``(ratio, angles)`` where ``angles`` is aligned with ``indices``
    and is NaN wherever either normal is invalid.
    """
    n = len(indptr) - 1
    counts = np.diff(indptr)
    rows = np.repeat(np.arange(n), counts)
    N = normals.normals
    angles = angle_between(N[rows], N[indices])
    usable = normals.valid[rows] & normals.valid[indices] & (rows != indices)
    angles[~usable] = np.nan
    over = (usable & (angles > theta_high)).astype(np.int64)
    # reduceat misbehaves on empty rows; every row holds at least itself
    m = np.add.reduceat(usable.astype(np.int64), indptr[:-1])
    c = np.add.reduceat(over, indptr[:-1])
    ratio = np.where(m > 0, c / np.maximum(m, 1), 0.0)
    return ratio, angles


def seed_order(normals, labels=None):
    """Candidate seeds: ascending indices of valid, still-unlabeled points."""
    ok = np.asarray(normals.valid, dtype=bool).copy()
    if labels is not None:
        ok &= np.asarray(labels) == UNLABELED
    return np.flatnonzero(ok)


@numba.njit(cache=True, nogil=True)
def _grow(indptr, indices, angles, valid, is_edge, theta_low, theta_high):
    n = len(indptr) - 1
    labels = np.full(n, -1, np.int64)
    parent = np.full(n, -1, np.int64)
    enqueued = np.full(n, -1, np.int64)
    queue = np.empty(n, np.int64)
    region = 0
    for root in range(n):
        if not valid[root] or labels[root] != -1:
            continue
        labels[root] = region
        enqueued[root] = region
        head = 0
        tail = 0
        queue[tail] = root
        tail += 1
        while head < tail:
            s = queue[head]
            head += 1
            edge = is_edge[s]
            for e in range(indptr[s], indptr[s + 1]):
                p = indices[e]
                if p == s or not valid[p]:
                    continue
                lab = labels[p]
                # first writer wins; a region never claims another's points
                if lab != -1 and lab != region:
                    continue
                th = angles[e]
                if th > theta_high:
                    continue
                if lab == -1:
                    labels[p] = region
                    parent[p] = s
                if enqueued[p] != region and (th < theta_low or not edge):
                    enqueued[p] = region
                    queue[tail] = p
                    tail += 1
        region += 1
    return labels, parent


def grow_regions(cloud, normals, index, cfg):
    """Segment ``cloud`` into smooth surface regions.

    Regions are grown from seeds in :func:`seed_order`; a point keeps the
    first label it receives. Regions smaller than ``cfg.min_segment_size``
    are dissolved to ``UNLABELED`` and the survivors renumbered 0..S-1 in
    order of their root seed.
    """
    cloud = check_cloud(cloud)
    indptr, indices = index.radius_graph(cfg.radius_r)
    ratio, angles = edge_ratios(normals, indptr, indices, cfg.theta_high)
    valid = np.asarray(normals.valid, dtype=np.bool_)
    if cfg.mode == "dual":
        is_edge = valid & (ratio > cfg.edge_ratio_k)
        theta_low = cfg.theta_low
    else:
        is_edge = np.zeros(len(valid), dtype=np.bool_)
        theta_low = cfg.theta_high
    angles = np.where(np.isnan(angles), np.inf, angles)

    raw, parent = _grow(np.asarray(indptr), np.asarray(indices), angles, valid, is_edge,
                        theta_low, cfg.theta_high)
    labels, segments = _relabel(raw, cfg.min_segment_size)
    parent[labels == UNLABELED] = -1

    for a in (labels, parent, ratio):
        a.setflags(write=False)
    edge_points = np.flatnonzero(is_edge)
    edge_points.setflags(write=False)
    return Segmentation(labels, edge_points, segments, ratio, parent, cfg)


def _relabel(raw, min_size):
    labels = np.full(len(raw), UNLABELED, dtype=np.int64)
    if len(raw) == 0 or raw.max() < 0:
        return labels, []
    counts = np.bincount(raw[raw >= 0])
    keep = np.flatnonzero(counts >= min_size)
    remap = np.full(len(counts), UNLABELED, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    mask = raw >= 0
    labels[mask] = remap[raw[mask]]
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(len(keep) + 1))
    segments = []
    for lab in range(len(keep)):
        members = order[bounds[lab]:bounds[lab + 1]]
        members.setflags(write=False)
        segments.append(SegmentRecord(lab, members))
    return labels, segments


class RegionGrowingSegmenter(ClusterMixin, BaseEstimator):
    """Clusterer labelling each point with its smooth surface segment.

    Angles are given in degrees, lengths in meters.

    Parameters:
        theta_low, theta_high: smoothness thresholds.
        edge_ratio: edge-point fraction ``k``.
        radius: neighborhood radius for growth and edge points.
        min_segment_size: smaller regions are dissolved to -1.
        normal_radius: radius for normal estimation (defaults to ``radius``).
        mode: ``"dual"`` or ``"single"`` (single threshold ``theta_high``).
        viewpoint: overrides the cloud's sensor origin.

    Attributes after ``fit``: ``labels_``, ``edge_points_``,
    ``segmentation_``, ``normals_``, ``n_segments_``.
    """

    def __init__(self, theta_low=4.0, theta_high=20.0, edge_ratio=0.4, radius=0.01,
                 min_segment_size=50, normal_radius=None, mode="dual", viewpoint=None):
        self.theta_low = theta_low
        self.theta_high = theta_high
        self.edge_ratio = edge_ratio
        self.radius = radius
        self.min_segment_size = min_segment_size
        self.normal_radius = normal_radius
        self.mode = mode
        self.viewpoint = viewpoint

    def config(self):
        kw = dict(edge_ratio_k=self.edge_ratio, radius_r=self.radius,
                  min_segment_size=self.min_segment_size)
        if self.mode == "single":
            return SegmentationConfig.single(math.radians(self.theta_high), **kw)
        return SegmentationConfig.from_degrees(self.theta_low, self.theta_high, **kw)

    def fit(self, X, y=None, index=None):
        cfg = self.config()
        cloud = check_cloud(X, self.viewpoint)
        if index is None:
            index = NeighborIndex(cloud)
        normals = estimate_normals(cloud, index, radius=self.normal_radius or self.radius)
        self.normals_ = normals
        self.segmentation_ = grow_regions(cloud, normals, index, cfg)
        self.labels_ = np.array(self.segmentation_.labels)
        self.edge_points_ = np.array(self.segmentation_.edge_points)
        self.n_segments_ = self.segmentation_.n_segments
        self.n_features_in_ = 3
        return self
