import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from graspaff.cloud import PointCloud
from graspaff.pcd import PCDError, UnsupportedPCDError, load_pcd, write_pcd

HEADER = """# .PCD v0.7
VERSION 0.7
FIELDS {fields}
SIZE {size}
TYPE {type}
COUNT {count}
WIDTH {width}
HEIGHT {height}
VIEWPOINT 0 0 0 1 0 0 0
POINTS {points}
DATA {data}
"""


def _header(fields="x y z", size="4 4 4", type_="F F F", count="1 1 1", width=3, height=1,
            points=None, data="ascii"):
    return HEADER.format(fields=fields, size=size, type=type_, count=count, width=width,
                         height=height, points=width * height if points is None else points,
                         data=data)


def test_ascii_nan_row_dropped(tmp_path):
    p = tmp_path / "a.pcd"
    p.write_text(_header() + "0 0 0\nnan nan nan\n1 2 3\n")
    cloud = load_pcd(p)
    assert len(cloud) == 2 and cloud.dropped == 1
    np.testing.assert_array_equal(cloud.points[1], [1, 2, 3])
    np.testing.assert_array_equal(cloud.source_index, [0, 2])


def test_ascii_rgb_fields(tmp_path):
    rng = np.random.default_rng(0)
    n = 37050
    pts = rng.uniform(-1, 1, size=(n, 3)).astype(np.float32)
    rgb = (np.array([10, 20, 30], np.uint32) << np.array([16, 8, 0], np.uint32)).sum()
    packed = np.full(n, rgb, np.uint32).view(np.float32)
    rows = "\n".join(f"{x!r} {y!r} {z!r} {c!r}" for (x, y, z), c in
                     zip(pts.tolist(), packed.tolist()))
    p = tmp_path / "rgb.pcd"
    p.write_text(_header("x y z rgb", "4 4 4 4", "F F F F", "1 1 1 1", width=n) + rows + "\n")
    cloud = load_pcd(p)
    assert len(cloud) == 37050
    np.testing.assert_array_equal(cloud.colors[0], [10, 20, 30])


def test_binary_with_extra_fields(tmp_path):
    pts = np.array([[0.1, 0.2, 0.3], [1, 2, 3]], dtype=np.float32)
    body = b"".join(struct.pack("<fffIf", *p, 0x00FF0000, 7.0) for p in pts)
    p = tmp_path / "b.pcd"
    p.write_bytes(_header("x y z rgb intensity", "4 4 4 4 4", "F F F U F", "1 1 1 1 1",
                          width=2, data="binary").encode() + body)
    cloud = load_pcd(p)
    np.testing.assert_allclose(cloud.points, pts, atol=1e-7)
    np.testing.assert_array_equal(cloud.colors[0], [255, 0, 0])


def test_organized_preserves_shape(tmp_path):
    p = tmp_path / "o.pcd"
    p.write_text(_header(width=2, height=2) + "0 0 0\n1 0 0\nnan 0 0\n1 1 0\n")
    cloud = load_pcd(p)
    assert (cloud.width, cloud.height) == (2, 2)
    assert cloud.is_organized and cloud.dropped == 1


def test_row_width_mismatch_reports_line(tmp_path):
    p = tmp_path / "bad.pcd"
    p.write_text(_header() + "0 0 0\n1 2\n3 3 3\n")
    with pytest.raises(PCDError) as err:
        load_pcd(p)
    assert err.value.lineno == 13


def test_point_count_mismatch(tmp_path):
    p = tmp_path / "short.pcd"
    p.write_text(_header() + "0 0 0\n1 1 1\n")
    with pytest.raises(PCDError):
        load_pcd(p)


def test_malformed_header_reports_line(tmp_path):
    p = tmp_path / "h.pcd"
    p.write_text(_header().replace("WIDTH 3", "WIDHT 3"))
    with pytest.raises(PCDError) as err:
        load_pcd(p)
    assert err.value.lineno == 7
    p.write_text(_header(fields="x y"))
    with pytest.raises(PCDError):
        load_pcd(p)
    p.write_text(_header(size="4 4"))
    with pytest.raises(PCDError):
        load_pcd(p)


def test_compressed_rejected(tmp_path):
    p = tmp_path / "c.pcd"
    p.write_bytes(_header(data="binary_compressed").encode() + b"\x00" * 32)
    with pytest.raises(UnsupportedPCDError):
        load_pcd(p)


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_pcd(tmp_path / "nope.pcd")


@pytest.mark.parametrize("binary", [False, True])
def test_write_load_roundtrip(tmp_path, binary):
    rng = np.random.default_rng(1)
    cloud = PointCloud(rng.uniform(-2, 2, size=(500, 3)),
                       rng.integers(0, 256, size=(500, 3)), viewpoint=(0.1, 0.2, 0.3))
    p = tmp_path / "r.pcd"
    write_pcd(cloud, p, binary=binary)
    back = load_pcd(p)
    np.testing.assert_array_equal(back.points, cloud.points)
    np.testing.assert_array_equal(back.colors, cloud.colors)
    np.testing.assert_array_equal(back.viewpoint, cloud.viewpoint)
    assert not list(tmp_path.glob("*.tmp*"))


@given(arrays(np.float64, st.tuples(st.integers(0, 30), st.just(3)),
              elements=st.floats(-100, 100, allow_nan=False)))
def test_roundtrip_property(tmp_path_factory, pts):
    p = tmp_path_factory.mktemp("rt") / "p.pcd"
    write_pcd(PointCloud(pts), p)
    back = load_pcd(p)
    assert back.points.shape == pts.shape
    assert np.all(np.abs(back.points - pts) <= 1e-6)
