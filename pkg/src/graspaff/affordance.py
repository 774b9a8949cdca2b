"""Grasp handles for a two-finger parallel-jaw gripper.

Every segment gets a local frame from PCA: ``a`` (major axis), ``f``
(minor axis, the closing direction) and ``n`` (surface normal toward the
sensor). Cloud points near a candidate centre are expressed in that frame
by scalar projection, which turns the 6-DOF pose search into 1-D interval
checks along ``f``:

1. collect every cloud point within ``d/2`` of the centre, whatever its label;
2. keep the slab ``|a| <= e/2`` swept by the fingers;
3. keep points no deeper than ``l`` below the highest one in the slab;
4. grow the patch through ``f = 0`` while consecutive points are closer
   than ``g``; both ends need free space of at least ``g`` and the patch
   must fit inside the aperture ``d``.

An end with no further point inside the window is accepted only when it
stops at least ``OPEN_END_MARGIN * g`` short of ``d/2``; otherwise the
surface may simply continue past the window and the candidate is rejected.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .normals import COLLINEAR_TOL

GIMBAL_TOL = 1e-8
OPEN_END_MARGIN = 0.5


class FrameError(ValueError):
    """Raised when a segment is too degenerate to define a frame."""


@dataclass(frozen=True)
class GripperModel:
    """Parallel-jaw gripper geometry, all lengths in meters.

    Attributes:
        d: maximum hand aperture.
        w: finger width.
        e: finger thickness, also the width of a search band along ``a``.
        h: finger length.
        l: minimum grasp depth.
        g: minimum free gap needed beside the object for a finger.
    """

    d: float = 0.08
    w: float = 0.01
    e: float = 0.02
    h: float = 0.06
    l: float = 0.03
    g: float = 0.012

    def __post_init__(self):
        for name in ("d", "w", "e", "h", "l", "g"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"gripper {name} must be a positive length, got {v!r}")
        if not self.g > self.w:
            raise ValueError(f"clearance g ({self.g}) must exceed finger width w ({self.w})")
        if not self.l <= self.h:
            raise ValueError(f"grasp depth l ({self.l}) cannot exceed finger length h ({self.h})")

    def to_dict(self):
        return {k: getattr(self, k) for k in ("d", "w", "e", "h", "l", "g")}


@dataclass(frozen=True, eq=False)
class SegmentFrame:
    """PCA frame of one segment.

    ``axes`` has columns ``[f, a, n]`` and is a proper rotation.
    ``surface_variation`` is the smallest eigenvalue over the eigenvalue sum,
    near 0 for planes and larger on curved patches.
    """

    centroid: np.ndarray
    f: np.ndarray
    a: np.ndarray
    n: np.ndarray
    extent_a: float
    extent_f: float
    eigenvalues: np.ndarray
    label: int = -1

    @property
    def axes(self):
        return np.column_stack([self.f, self.a, self.n])

    @property
    def surface_variation(self):
        total = float(np.sum(self.eigenvalues))
        return float(self.eigenvalues[2]) / total if total > 0 else 0.0


@dataclass(frozen=True, eq=False)
class GraspHandle:
    """A validated grasp.

    ``position`` is the centroid of the patch, ``axes`` the frame columns
    ``[f, a, n]``; the gripper approaches along ``-n`` and closes along
    ``f``. ``center`` is the candidate centre the patch was searched from
    and ``step`` its signed index along ``a``.
    """

    segment_id: int
    position: np.ndarray
    axes: np.ndarray
    angles: tuple
    patch_extent: float
    patch_indices: np.ndarray
    center: np.ndarray
    step: int
    depth_l: float

    @property
    def approach(self):
        return -self.axes[:, 2]

    @property
    def closing_axis(self):
        return self.axes[:, 0]

    @property
    def pose(self):
        """``[x, y, z, theta_x, theta_y, theta_z]``."""
        return np.concatenate([self.position, self.angles])

    def to_dict(self):
        return {
            "segment_id": int(self.segment_id),
            "position": [float(v) for v in self.position],
            "axes": {k: [float(v) for v in self.axes[:, i]] for i, k in enumerate("fan")},
            "angles_xyz": [float(v) for v in self.angles],
            "patch_extent_f": float(self.patch_extent),
            "depth_l": float(self.depth_l),
            "n_points": int(len(self.patch_indices)),
            "center": [float(v) for v in self.center],
            "step": int(self.step),
        }


def segment_frame(members, cloud, viewpoint=None, label=-1):
    """PCA frame of the points ``members`` of ``cloud``.

    Raises:
        FrameError: fewer than 3 points or all of them (nearly) collinear.
    """
    idx = np.asarray(members, dtype=np.int64)
    if len(idx) < 3:
        raise FrameError(f"segment {label} has {len(idx)} points, need at least 3")
    pts = cloud.points[idx]
    mu = pts.mean(axis=0)
    X = pts - mu
    evals, evecs = np.linalg.eigh(X.T @ X / len(idx))
    evals = evals[::-1]
    evecs = evecs[:, ::-1]
    if not (evals[0] > 0 and evals[1] > COLLINEAR_TOL * evals[0]):
        raise FrameError(f"segment {label} is degenerate (collinear points)")
    a, f, n = evecs[:, 0], evecs[:, 1], evecs[:, 2]
    vp = cloud.viewpoint if viewpoint is None else np.asarray(viewpoint, dtype=np.float64)
    if np.dot(n, vp - mu) < 0:
        n = -n
    # columns [f, a, n] form a right-handed frame when a = n x f
    a = np.cross(n, f)
    a /= np.linalg.norm(a)
    ext_a = 2.0 * float(np.max(np.abs(X @ a)))
    ext_f = 2.0 * float(np.max(np.abs(X @ f)))
    for v in (mu, f, a, n, evals):
        v.setflags(write=False)
    return SegmentFrame(mu, f, a, n, ext_a, ext_f, np.maximum(evals, 0.0), int(label))


def compute_frames(segmentation, cloud, viewpoint=None):
    """Frames for every segment; degenerate segments are left out."""
    frames = {}
    for seg in segmentation.segments:
        try:
            frames[seg.label] = segment_frame(seg.members, cloud, viewpoint, seg.label)
        except FrameError:
            continue
    return frames


def project_to_frame(points, frame, center):
    """Coordinates ``(f, a, n)`` of ``points`` (an (m, 3) array) about ``center``."""
    P = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return (P - np.asarray(center, dtype=np.float64)) @ frame.axes


def unproject(coords, frame, center):
    """Inverse of :func:`project_to_frame`."""
    return np.asarray(center, dtype=np.float64) + np.asarray(coords) @ frame.axes.T


def pose_angles(R):
    """Extrinsic X-Y-Z angles ``(tx, ty, tz)`` with ``R = Rz(tz) Ry(ty) Rx(tx)``.

    At gimbal lock (``|sin ty|`` within 1e-8 of 1) ``tx`` is set to 0.
    """
    R = np.asarray(R, dtype=np.float64)
    s = -R[2, 0]
    if abs(abs(s) - 1.0) <= GIMBAL_TOL:
        ty = math.copysign(math.pi / 2, s)
        return 0.0, ty, math.atan2(-R[0, 1], R[1, 1])
    ty = math.atan2(s, math.hypot(R[0, 0], R[1, 0]))
    return math.atan2(R[2, 1], R[2, 2]), ty, math.atan2(R[1, 0], R[0, 0])


def rotation_from_angles(tx, ty, tz):
    """Rotation matrix ``Rz(tz) Ry(ty) Rx(tx)``."""
    cx, sx = math.cos(tx), math.sin(tx)
    cy, sy = math.cos(ty), math.sin(ty)
    cz, sz = math.cos(tz), math.sin(tz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def candidate_steps(frame, gripper):
    """Signed band indices 0, +1, -1, +2, ... that stay within the segment."""
    K = int(math.floor(frame.extent_a / (2.0 * gripper.e)))
    steps = [0]
    for k in range(1, K + 1):
        steps += [k, -k]
    return steps


def search_band(index, frame, center, gripper):
    """Run the band search at one candidate centre.

    Returns ``(patch_indices, f_lo, f_hi)`` for a valid patch, else None.
    """
    d, g = gripper.d, gripper.g
    half = d / 2.0
    nb = index.radius_neighbors(center, half)
    if len(nb) == 0:
        return None
    q = project_to_frame(index.points[nb], frame, center)
    band = np.abs(q[:, 1]) <= gripper.e / 2.0
    if not band.any():
        return None
    n_top = q[band, 2].max()
    band &= q[:, 2] >= n_top - gripper.l
    sel = nb[band]
    fs = q[band, 0]
    order = np.argsort(fs, kind="stable")
    fs = fs[order]
    sel = sel[order]

    # the approach ray at f = 0 has to land on the patch
    lo = int(np.searchsorted(fs, 0.0, side="right")) - 1
    if lo < 0:
        return None
    if fs[lo] < 0.0 and (lo + 1 >= len(fs) or fs[lo + 1] - fs[lo] >= g):
        return None
    gaps = np.diff(fs)
    brk = np.flatnonzero(gaps >= g)
    i0 = int(brk[brk < lo][-1]) + 1 if np.any(brk < lo) else 0
    after = brk[brk >= lo]
    i1 = int(after[0]) if len(after) else len(fs) - 1

    # an open end must stop clearly inside the window
    limit = half - OPEN_END_MARGIN * g
    if i0 == 0 and -fs[0] > limit:
        return None
    if i1 == len(fs) - 1 and fs[-1] > limit:
        return None
    extent = fs[i1] - fs[i0]
    if not extent < d:
        return None
    return sel[i0:i1 + 1], float(fs[i0]), float(fs[i1])


def _segment_handles(label, frame, index, gripper):
    handles = []
    for k in candidate_steps(frame, gripper):
        center = frame.centroid + k * gripper.e * frame.a
        found = search_band(index, frame, center, gripper)
        if found is None:
            continue
        patch, f_lo, f_hi = found
        patch = np.sort(patch)
        patch.setflags(write=False)
        center = np.array(center)
        center.setflags(write=False)
        pos = index.points[patch].mean(axis=0)
        pos.setflags(write=False)
        handles.append(GraspHandle(label, pos, frame.axes, pose_angles(frame.axes),
                                   f_hi - f_lo, patch, center, k, gripper.l))
    handles.sort(key=lambda h: (abs(h.step), h.patch_extent, h.step))
    return handles


def find_handles(segmentation, cloud, index, frames=None, gripper=None, labels=None,
                 n_jobs=1):
    """Search every segment for grasp handles.

    Args:
        segmentation: result of region growing.
        cloud: the segmented cloud.
        index: neighbor index over ``cloud``.
        frames: ``{label: SegmentFrame}``; computed when omitted. Segments
            without a frame are skipped.
        gripper: :class:`GripperModel` (defaults when omitted).
        labels: restrict the search to these segment labels.
        n_jobs: worker threads for the per-segment search.

    Returns:
        Handles ordered by segment label, then by distance of the candidate
        centre from the centroid and by patch extent.
    """
    gripper = gripper or GripperModel()
    if frames is None:
        frames = compute_frames(segmentation, cloud)
    todo = sorted(frames) if labels is None else sorted(set(labels) & set(frames))
    if n_jobs and n_jobs > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(lambda s: _segment_handles(s, frames[s], index, gripper), todo))
    else:
        parts = [_segment_handles(s, frames[s], index, gripper) for s in todo]
    return [h for part in parts for h in part]


def curved_labels(frames, threshold=0.01):
    """Labels of segments whose surface variation exceeds ``threshold``."""
    return [s for s, fr in sorted(frames.items()) if fr.surface_variation > threshold]


__all__ = ["GripperModel", "SegmentFrame", "GraspHandle", "FrameError", "segment_frame",
           "compute_frames", "project_to_frame", "unproject", "pose_angles",
           "rotation_from_angles", "candidate_steps", "search_band", "find_handles",
           "curved_labels"]
