"""End-to-end detector: filter, normals, segmentation, handle search."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .affordance import GripperModel, compute_frames, curved_labels, find_handles
from .cloud import CloudFilterConfig, check_cloud
from .normals import estimate_normals
from .segmentation import SegmentationConfig, grow_regions
from .spatial import NeighborIndex

STAGES = ("filter", "index", "normals", "segmentation", "handle_search")


@dataclass(frozen=True, eq=False)
class Detection:
    """Everything produced for one cloud.

    ``cloud`` is the cloud after filtering; all indices refer to it.
    """

    cloud: object
    normals: object
    segmentation: object
    frames: dict
    handles: list
    timings: dict = field(default_factory=dict)

    def to_dict(self, include_timings=False):
        out = {"n_points": len(self.cloud), "n_segments": self.segmentation.n_segments,
               "n_handles": len(self.handles), "handles": [h.to_dict() for h in self.handles]}
        if include_timings:
            out["timings"] = {k: round(v, 6) for k, v in self.timings.items()}
        return out


class GraspDetector(BaseEstimator):
    """Detect grasp handles in a single-view point cloud.

    Angles are degrees and lengths meters.

    Parameters:
        d, w, e, h, l, g: gripper geometry (see :class:`GripperModel`).
        theta_low, theta_high, edge_ratio, radius, min_segment_size: region
            growing settings; ``normal_radius`` defaults to ``radius``.
        voxel_leaf, smoothing_radius, max_displacement: optional
            pre-filtering, 0 disables.
        surface_filter: ``"all"`` searches every segment, ``"curved"`` only
            segments whose surface variation exceeds ``curvature_threshold``.
        n_jobs: threads for the per-segment handle search.
        viewpoint: overrides the sensor origin of the input.

    Attributes after ``fit``: ``detection_``, ``handles_``, ``labels_``,
    ``timings_``.
    """

    def __init__(self, d=0.08, w=0.01, e=0.02, h=0.06, l=0.03, g=0.012,
                 theta_low=4.0, theta_high=20.0, edge_ratio=0.4, radius=0.01,
                 min_segment_size=50, normal_radius=None, voxel_leaf=0.0,
                 smoothing_radius=0.0, max_displacement=0.0, surface_filter="all",
                 curvature_threshold=0.01, n_jobs=1, viewpoint=None):
        self.d = d
        self.w = w
        self.e = e
        self.h = h
        self.l = l
        self.g = g
        self.theta_low = theta_low
        self.theta_high = theta_high
        self.edge_ratio = edge_ratio
        self.radius = radius
        self.min_segment_size = min_segment_size
        self.normal_radius = normal_radius
        self.voxel_leaf = voxel_leaf
        self.smoothing_radius = smoothing_radius
        self.max_displacement = max_displacement
        self.surface_filter = surface_filter
        self.curvature_threshold = curvature_threshold
        self.n_jobs = n_jobs
        self.viewpoint = viewpoint

    def gripper(self):
        return GripperModel(self.d, self.w, self.e, self.h, self.l, self.g)

    def segmentation_config(self):
        return SegmentationConfig.from_degrees(
            self.theta_low, self.theta_high, edge_ratio_k=self.edge_ratio,
            radius_r=self.radius, min_segment_size=self.min_segment_size)

    def filter_config(self):
        return CloudFilterConfig(self.voxel_leaf, self.smoothing_radius, self.max_displacement)

    def validate(self):
        """Check every parameter; raises ``ValueError`` with the offending value."""
        if self.surface_filter not in ("all", "curved"):
            raise ValueError(f"surface_filter must be 'all' or 'curved', got {self.surface_filter!r}")
        if self.normal_radius is not None and not self.normal_radius > 0:
            raise ValueError(f"normal_radius must be > 0, got {self.normal_radius}")
        return self.gripper(), self.segmentation_config(), self.filter_config()

    def detect(self, X):
        """Run the pipeline on ``X`` and return a :class:`Detection`."""
        gripper, seg_cfg, filt = self.validate()
        cloud = check_cloud(X, self.viewpoint)
        timings = {}
        clock = time.perf_counter

        t0 = clock()
        cloud = filt.apply(cloud)
        timings["filter"] = clock() - t0
        if len(cloud) == 0:
            raise ValueError("cloud is empty after filtering")

        t0 = clock()
        index = NeighborIndex(cloud)
        timings["index"] = clock() - t0

        t0 = clock()
        normals = estimate_normals(cloud, index, radius=self.normal_radius or self.radius)
        timings["normals"] = clock() - t0

        t0 = clock()
        seg = grow_regions(cloud, normals, index, seg_cfg)
        timings["segmentation"] = clock() - t0

        t0 = clock()
        frames = compute_frames(seg, cloud)
        labels = None
        if self.surface_filter == "curved":
            labels = curved_labels(frames, self.curvature_threshold)
        handles = find_handles(seg, cloud, index, frames, gripper, labels=labels,
                               n_jobs=self.n_jobs)
        timings["handle_search"] = clock() - t0
        timings["total"] = sum(timings[s] for s in STAGES)
        return Detection(cloud, normals, seg, frames, handles, timings)

    def fit(self, X, y=None):
        det = self.detect(X)
        self.detection_ = det
        self.handles_ = det.handles
        self.labels_ = np.array(det.segmentation.labels)
        self.timings_ = dict(det.timings)
        self.n_features_in_ = 3
        return self

    def predict(self, X):
        """Handles found in ``X``."""
        return self.detect(X).handles

    def fit_predict(self, X, y=None):
        return self.fit(X).handles_
