import numpy as np
import pytest
from sklearn.base import clone

from graspaff.detector import GraspDetector
from graspaff.synth import clutter_spec, synth_scene


def test_params_and_clone():
    det = GraspDetector(d=0.09, theta_high=25)
    twin = clone(det)
    assert twin.get_params() == det.get_params()
    assert twin.gripper().d == 0.09


def test_validation():
    with pytest.raises(ValueError):
        GraspDetector(surface_filter="flat").validate()
    with pytest.raises(ValueError):
        GraspDetector(g=0.005).validate()
    with pytest.raises(ValueError):
        GraspDetector(theta_low=30, theta_high=20).validate()


def test_fit_predict_and_curved_subset():
    cloud, _ = synth_scene(clutter_spec(0))
    det = GraspDetector().fit(cloud)
    assert len(det.labels_) == len(cloud)
    assert det.timings_["total"] > 0
    again = det.predict(cloud)
    assert [h.to_dict() for h in again] == [h.to_dict() for h in det.handles_]
    curved = GraspDetector(surface_filter="curved").fit(cloud).handles_
    keys = {(h.segment_id, h.step) for h in det.handles_}
    assert {(h.segment_id, h.step) for h in curved} <= keys


def test_raw_array_input_with_viewpoint():
    cloud, _ = synth_scene(clutter_spec(0))
    a = GraspDetector().detect(cloud)
    b = GraspDetector(viewpoint=cloud.viewpoint).detect(np.array(cloud.points))
    assert [h.to_dict() for h in a.handles] == [h.to_dict() for h in b.handles]


def test_voxel_filter_changes_cloud():
    cloud, _ = synth_scene(clutter_spec(0))
    det = GraspDetector(voxel_leaf=0.004).detect(cloud)
    assert len(det.cloud) < len(cloud)
    for h in det.handles:
        assert h.patch_indices.max() < len(det.cloud)
