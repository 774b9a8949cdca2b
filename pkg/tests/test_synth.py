import numpy as np
import pytest

from graspaff.synth import (Primitive, SyntheticSceneSpec, clutter_spec, cuboid_fixture,
                            synth_scene)


def test_cuboid_only_three_faces_visible():
    cloud, ann = synth_scene(cuboid_fixture(noise=0.0))
    p = cloud.points
    on_face = np.abs(np.abs(p) - 0.05) < 1e-9
    # every visible point lies on a +x, +y or +z face
    assert np.all((on_face & (p > 0)).any(axis=1))
    assert ann.total_graspable == 1 and len(ann.objects[0].indices) == len(cloud)


def test_sensor_above_sees_top_only():
    spec = SyntheticSceneSpec((Primitive("cuboid", (0.1, 0.1, 0.1)),), 2e4, (0, 0, 5.0))
    cloud, _ = synth_scene(spec)
    assert np.allclose(cloud.points[:, 2], 0.05)


def test_two_cylinders_disjoint():
    spec = SyntheticSceneSpec((Primitive("cylinder", (0.02, 0.1), (-0.1, 0, 0), name="a"),
                               Primitive("cylinder", (0.02, 0.1), (0.1, 0, 0), name="b")),
                              2e4, (0, 0, 1.0))
    cloud, ann = synth_scene(spec)
    assert ann.total_graspable == 2
    a, b = (set(o.indices.tolist()) for o in ann.objects)
    assert a and b and not a & b
    ann.validate(len(cloud))


def test_noise_level():
    spec = SyntheticSceneSpec((Primitive("plane", (0.5, 0.5)),), 2e4, (0, 0, 1.0), 0.001, seed=3)
    cloud, _ = synth_scene(spec)
    rms = np.sqrt(np.mean(cloud.points[:, 2] ** 2))
    assert 0.0008 <= rms <= 0.0012


def test_occluded_object_hidden():
    # a small box directly under a big one is invisible from above
    spec = SyntheticSceneSpec((Primitive("cuboid", (0.2, 0.2, 0.02), (0, 0, 0.2)),
                               Primitive("cuboid", (0.05, 0.05, 0.05), (0, 0, 0.0))),
                              2e4, (0, 0, 1.0))
    _, ann = synth_scene(spec)
    assert ann.total_graspable == 1


def test_partition_is_exact():
    spec = clutter_spec(7)
    cloud, ann = synth_scene(spec)
    ann.validate(len(cloud))
    seen = np.concatenate([o.indices for o in ann.objects])
    assert len(seen) == len(set(seen.tolist()))


def test_spec_validation_and_roundtrip():
    with pytest.raises(ValueError):
        synth_scene(SyntheticSceneSpec(()))
    with pytest.raises(ValueError):
        SyntheticSceneSpec((Primitive("sphere", (0.1,)),), density=0)
    with pytest.raises(ValueError):
        Primitive("torus", (1,))
    spec = clutter_spec(3)
    again = SyntheticSceneSpec.from_dict(spec.to_dict())
    a, _ = synth_scene(spec)
    b, _ = synth_scene(again)
    np.testing.assert_array_equal(a.points, b.points)


def test_clutter_object_count():
    for seed in range(5):
        spec = clutter_spec(seed)
        assert 5 <= len(spec.primitives) - 1 <= 9
