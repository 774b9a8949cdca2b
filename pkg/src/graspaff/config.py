"""Run configuration: unit-suffixed lengths and INI config files.

A config file maps onto :class:`~graspaff.detector.GraspDetector`
parameters::

    [gripper]
    d = 8cm
    g = 12mm

    [segmentation]
    theta_low = 4
    theta_high = 20
    radius = 1cm

    [filter]
    voxel_leaf = 0

    [search]
    surface_filter = all
"""
from __future__ import annotations

import configparser
import math
import re

_LENGTH = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(mm|cm|m)?\s*$")
_UNITS = {"mm": 1e-3, "cm": 1e-2, "m": 1.0}
DEFAULT_LENGTH_UNIT = "cm"

# (section, key) -> (detector parameter, kind)
_SCHEMA = {
    ("gripper", "d"): ("d", "length"),
    ("gripper", "w"): ("w", "length"),
    ("gripper", "e"): ("e", "length"),
    ("gripper", "h"): ("h", "length"),
    ("gripper", "l"): ("l", "length"),
    ("gripper", "g"): ("g", "length"),
    ("segmentation", "theta_low"): ("theta_low", "angle"),
    ("segmentation", "theta_high"): ("theta_high", "angle"),
    ("segmentation", "edge_ratio"): ("edge_ratio", "float"),
    ("segmentation", "radius"): ("radius", "length"),
    ("segmentation", "min_segment_size"): ("min_segment_size", "int"),
    ("segmentation", "normal_radius"): ("normal_radius", "length"),
    ("filter", "voxel_leaf"): ("voxel_leaf", "length"),
    ("filter", "smoothing_radius"): ("smoothing_radius", "length"),
    ("filter", "max_displacement"): ("max_displacement", "length"),
    ("search", "surface_filter"): ("surface_filter", "str"),
    ("search", "curvature_threshold"): ("curvature_threshold", "float"),
}


def parse_length(text, default_unit=DEFAULT_LENGTH_UNIT):
    """Length in meters from ``"8cm"``, ``"12 mm"``, ``"0.08m"`` or a bare
    number in ``default_unit``."""
    if isinstance(text, (int, float)):
        return float(text) * _UNITS[default_unit]
    m = _LENGTH.match(str(text))
    if not m:
        raise ValueError(f"cannot read length {text!r}; use a number with mm, cm or m")
    return float(m.group(1)) * _UNITS[m.group(2) or default_unit]


def parse_angle(text):
    """Angle in degrees from ``"20"``, ``"20deg"`` or ``"0.35rad"``."""
    s = str(text).strip().lower()
    if s.endswith("rad"):
        return math.degrees(float(s[:-3]))
    if s.endswith("deg"):
        s = s[:-3]
    try:
        return float(s)
    except ValueError:
        raise ValueError(f"cannot read angle {text!r}") from None


def _convert(kind, raw):
    if kind == "length":
        return parse_length(raw)
    if kind == "angle":
        return parse_angle(raw)
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return str(raw).strip()


def load_config(path):
    """Detector parameters from an INI file; unknown keys are errors."""
    cp = configparser.ConfigParser()
    with open(path) as fh:
        cp.read_file(fh)
    params = {}
    for section in cp.sections():
        for key, raw in cp.items(section):
            spec = _SCHEMA.get((section.lower(), key.lower()))
            if spec is None:
                raise ValueError(f"{path}: unknown setting [{section}] {key}")
            name, kind = spec
            try:
                params[name] = _convert(kind, raw)
            except ValueError as exc:
                raise ValueError(f"{path}: [{section}] {key}: {exc}") from None
    return params


__all__ = ["parse_length", "parse_angle", "load_config", "DEFAULT_LENGTH_UNIT"]
