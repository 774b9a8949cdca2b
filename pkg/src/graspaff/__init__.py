"""Graspable affordance detection for parallel-jaw grippers in point clouds."""

__version__ = "0.1.0"

from .affordance import GraspHandle, GripperModel, SegmentFrame, find_handles, pose_angles  # noqa: E402
from .cloud import CloudFilterConfig, PointCloud  # noqa: E402
from .detector import GraspDetector  # noqa: E402
from .evaluation import EvalReport, SceneAnnotation, evaluate  # noqa: E402
from .normals import NormalEstimator, estimate_normals  # noqa: E402
from .pcd import load_pcd, write_pcd  # noqa: E402
from .ply import export_ply  # noqa: E402
from .segmentation import RegionGrowingSegmenter, SegmentationConfig, grow_regions  # noqa: E402
from .spatial import NeighborIndex  # noqa: E402

__all__ = ["GraspHandle", "GripperModel", "SegmentFrame", "find_handles", "pose_angles",
           "CloudFilterConfig", "PointCloud", "GraspDetector", "EvalReport", "SceneAnnotation",
           "evaluate", "NormalEstimator", "estimate_normals", "load_pcd", "write_pcd",
           "export_ply", "RegionGrowingSegmenter", "SegmentationConfig", "grow_regions",
           "NeighborIndex"]
