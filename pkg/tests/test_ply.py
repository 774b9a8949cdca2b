import numpy as np

from graspaff.affordance import find_handles
from graspaff.cloud import PointCloud
from graspaff.pcd import load_pcd, write_pcd
from graspaff.ply import (EDGE_COLOR, HANDLE_COLOR, UNLABELED_COLOR, export_ply, load_ply,
                          segment_palette)
from graspaff.segmentation import RegionGrowingSegmenter
from graspaff.spatial import build


def _fold():
    rng = np.random.default_rng(0)
    u = rng.uniform(0, 0.1, 800)
    y = rng.uniform(0, 0.1, 800)
    pts = np.vstack([np.column_stack([-u[:400], y[:400], np.zeros(400)]),
                     np.column_stack([np.zeros(400), y[400:], u[400:]])])
    cloud = PointCloud(pts, viewpoint=(0.02, 0.05, 1.0))
    return cloud, RegionGrowingSegmenter().fit(cloud).segmentation_


def test_palette_distinct_and_avoids_reserved():
    pal = [tuple(c) for c in segment_palette(200)]
    assert len(set(pal)) == 200
    assert EDGE_COLOR not in pal and HANDLE_COLOR not in pal


def test_two_segments_two_colors_plus_edges(tmp_path):
    cloud, seg = _fold()
    assert seg.n_segments == 2
    export_ply(cloud, tmp_path / "s.ply", seg)
    pts, cols, edges = load_ply(tmp_path / "s.ply")
    colors = {tuple(c) for c in cols}
    assert EDGE_COLOR in colors
    # sparse border points without a normal stay unlabeled (grey)
    assert len(colors - {EDGE_COLOR, UNLABELED_COLOR}) == 2
    grey = (cols == UNLABELED_COLOR).all(axis=1)
    assert (seg.labels[grey] == -1).all()
    assert len(edges) == 0


def test_empty_handles_same_as_labels_only(tmp_path):
    cloud, seg = _fold()
    export_ply(cloud, tmp_path / "a.ply", seg)
    export_ply(cloud, tmp_path / "b.ply", seg, handles=[])
    assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()


def test_handle_adds_six_vertices(tmp_path):
    xs, ys = np.meshgrid(np.arange(-0.02, 0.0201, 0.002), np.arange(-0.05, 0.0501, 0.002))
    cloud = PointCloud(np.column_stack([xs.ravel(), ys.ravel(), np.zeros(xs.size)]),
                       viewpoint=(0, 0, 1))
    seg = RegionGrowingSegmenter().fit(cloud).segmentation_
    handles = find_handles(seg, cloud, build(cloud))[:1]
    export_ply(cloud, tmp_path / "h.ply", seg, handles)
    pts, cols, edges = load_ply(tmp_path / "h.ply")
    assert len(pts) == len(cloud) + 6
    assert len(edges) == 3
    assert (cols[handles[0].patch_indices] == HANDLE_COLOR).all()


def test_roundtrip_coordinates(tmp_path):
    rng = np.random.default_rng(3)
    cloud = PointCloud(rng.uniform(-1, 1, (300, 3)))
    write_pcd(cloud, tmp_path / "c.pcd")
    loaded = load_pcd(tmp_path / "c.pcd")
    export_ply(loaded, tmp_path / "c.ply")
    pts, _, _ = load_ply(tmp_path / "c.ply")
    assert np.max(np.abs(pts - cloud.points)) <= 1e-6
