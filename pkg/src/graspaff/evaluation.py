"""Recall-at-high-precision evaluation and timing benchmarks.

An object counts as detected when at least one handle is credited to it,
and a handle is credited to an object when at least ``CREDIT_FRACTION`` of
its patch points belong to that object. Scene recall is
``100 * detected / total``; the aggregate pools all scenes.
"""
from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

CREDIT_FRACTION = 0.6


@dataclass(frozen=True, eq=False)
class ObjectRecord:
    """One graspable object: id, human-readable label and member point indices."""

    object_id: str
    label: str
    indices: np.ndarray

    def __post_init__(self):
        idx = np.unique(np.asarray(self.indices, dtype=np.int64))
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def to_dict(self):
        return {"id": self.object_id, "label": self.label, "indices": self.indices.tolist()}


@dataclass(frozen=True, eq=False)
class SceneAnnotation:
    """Ground truth for one scene."""

    scene_id: str
    objects: list = field(default_factory=list)

    @property
    def total_graspable(self):
        return len(self.objects)

    def validate(self, n_points):
        """Raise ``ValueError`` unless every index lies in ``[0, n_points)`` and
        no point belongs to two objects."""
        seen = np.zeros(n_points, dtype=bool)
        for obj in self.objects:
            idx = obj.indices
            if len(idx) and (idx[0] < 0 or idx[-1] >= n_points):
                raise ValueError(f"scene {self.scene_id}: object {obj.object_id} indexes "
                                 f"outside a cloud of {n_points} points")
            if seen[idx].any():
                raise ValueError(f"scene {self.scene_id}: object {obj.object_id} overlaps "
                                 "another object")
            seen[idx] = True

    def owner_map(self, n_points):
        """Per-point object position in ``objects`` (-1 for background)."""
        owner = np.full(n_points, -1, dtype=np.int64)
        for k, obj in enumerate(self.objects):
            owner[obj.indices] = k
        return owner

    def to_dict(self):
        return {"scene_id": self.scene_id, "objects": [o.to_dict() for o in self.objects]}

    @classmethod
    def from_dict(cls, d):
        objs = [ObjectRecord(str(o["id"]), str(o.get("label", o["id"])), o["indices"])
                for o in d.get("objects", [])]
        return cls(str(d.get("scene_id", "")), objs)


def save_annotation(ann, path):
    with open(path, "w") as fh:
        json.dump(ann.to_dict(), fh, separators=(",", ":"))
        fh.write("\n")


def load_annotation(path):
    with open(path) as fh:
        return SceneAnnotation.from_dict(json.load(fh))


def load_text_annotation(path, cloud, scene_id=None):
    """Read a plain-text annotation as shipped with table-top datasets.

    One object per line, ``#`` starts a comment. Either
    ``<id> <label> <i> <i> ...`` listing member point indices, or
    ``<id> <label> box <xmin> <ymin> <zmin> <xmax> <ymax> <zmax>`` giving an
    axis-aligned region in the cloud frame. Points claimed by an earlier
    object are not reassigned.
    """
    objects = []
    taken = np.zeros(len(cloud), dtype=bool)
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) < 3:
                raise ValueError(f"{path}:{lineno}: expected '<id> <label> ...'")
            oid, label, rest = parts[0], parts[1], parts[2:]
            try:
                if rest[0].lower() == "box":
                    lo_hi = np.array([float(v) for v in rest[1:]])
                    if len(lo_hi) != 6:
                        raise ValueError("box needs 6 numbers")
                    inside = np.all((cloud.points >= lo_hi[:3]) & (cloud.points <= lo_hi[3:]),
                                    axis=1)
                    idx = np.flatnonzero(inside & ~taken)
                else:
                    idx = np.array([int(v) for v in rest], dtype=np.int64)
                    idx = idx[~taken[idx]]
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            taken[idx] = True
            objects.append(ObjectRecord(oid, label, idx))
    return SceneAnnotation(scene_id or str(path), objects)


def credit_handles(handles, annotation, n_points, fraction=CREDIT_FRACTION):
    """Number of handles credited to each object, as a list aligned with
    ``annotation.objects``."""
    owner = annotation.owner_map(n_points)
    counts = [0] * annotation.total_graspable
    for h in handles:
        patch = np.asarray(h.patch_indices, dtype=np.int64)
        if len(patch) == 0:
            continue
        own = owner[patch]
        own = own[own >= 0]
        if len(own) == 0:
            continue
        best = np.bincount(own)
        k = int(np.argmax(best))
        if best[k] >= fraction * len(patch):
            counts[k] += 1
    return counts


def recall_pct(detected, total):
    return 100.0 * detected / total if total else 0.0


@dataclass
class SceneResult:
    scene_id: str
    n_objects: int = 0
    n_detected: int = 0
    n_handles: int = 0
    handles_per_object: list = field(default_factory=list)
    timings: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def recall(self):
        return recall_pct(self.n_detected, self.n_objects)

    def to_dict(self, include_timings=True):
        d = {"scene_id": self.scene_id, "n_objects": self.n_objects,
             "detected_objects_with_handle": self.n_detected,
             "recall_pct": round(self.recall, 6), "n_handles": self.n_handles,
             "handles_per_object": list(self.handles_per_object)}
        if include_timings:
            d["timings"] = {k: round(v, 6) for k, v in self.timings.items()}
        if self.error is not None:
            d["error"] = self.error
        return d


@dataclass
class EvalReport:
    scenes: list
    config: dict = field(default_factory=dict)

    @property
    def ok(self):
        return [s for s in self.scenes if s.error is None]

    @property
    def failed(self):
        return [s for s in self.scenes if s.error is not None]

    @property
    def aggregate_recall(self):
        return recall_pct(sum(s.n_detected for s in self.ok), sum(s.n_objects for s in self.ok))

    def stage_totals(self):
        out = {}
        for s in self.ok:
            for k, v in s.timings.items():
                out[k] = out.get(k, 0.0) + v
        return out

    def to_dict(self, include_timings=False):
        d = {"aggregate_recall_pct": round(self.aggregate_recall, 6),
             "n_scenes": len(self.scenes), "n_failed": len(self.failed),
             "config": self.config,
             "scenes": [s.to_dict(include_timings) for s in self.scenes]}
        if include_timings:
            d["timings"] = {k: round(v, 6) for k, v in self.stage_totals().items()}
        return d

    def to_json(self, include_timings=False):
        return json.dumps(self.to_dict(include_timings), indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        """One row per scene: frame, n_objects, n_handles (objects with a
        handle) and recall in percent."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["frame", "n_objects", "n_handles", "recall"])
        for s in self.scenes:
            if s.error is None:
                w.writerow([s.scene_id, s.n_objects, s.n_detected, f"{s.recall:.2f}"])
        return buf.getvalue()


def _evaluate_one(item, detector):
    cloud, ann = item[0], item[1]
    load_time = item[2] if len(item) > 2 else None
    res = SceneResult(ann.scene_id, ann.total_graspable)
    try:
        ann.validate(len(cloud))
        det = detector.detect(cloud)
        if len(det.cloud) != len(cloud):
            raise ValueError("filtering changed the point count; annotations no longer apply")
        per_obj = credit_handles(det.handles, ann, len(cloud))
    except Exception as exc:  # recorded per scene, the run goes on
        res.error = f"{type(exc).__name__}: {exc}"
        return res
    res.handles_per_object = per_obj
    res.n_detected = sum(1 for c in per_obj if c > 0)
    res.n_handles = len(det.handles)
    res.timings = dict(det.timings)
    if load_time is not None:
        res.timings["load"] = load_time
    return res


def evaluate(scenes, detector=None, n_jobs=1):
    """Run ``detector`` on every ``(cloud, annotation[, load_seconds])`` item.

    Failing scenes are kept in the report with their error message. Scenes
    are reported in order of scene id.
    """
    from .detector import GraspDetector

    detector = detector if detector is not None else GraspDetector()
    detector.validate()
    items = list(scenes)
    if n_jobs and n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(lambda it: _evaluate_one(it, detector), items))
    else:
        results = [_evaluate_one(it, detector) for it in items]
    results.sort(key=lambda r: r.scene_id)
    return EvalReport(results, _config_echo(detector))


def _config_echo(detector):
    return {k: v for k, v in sorted(detector.get_params().items()) if k != "viewpoint"}


def bench(cloud, detector=None, repeats=5, load_time=None):
    """Median and 90th percentile wall time per stage over ``repeats`` runs.

    Also reports whether every run returned the same handles.
    """
    from .detector import STAGES, GraspDetector

    if repeats < 3:
        raise ValueError(f"repeats must be >= 3, got {repeats}")
    detector = detector if detector is not None else GraspDetector()
    runs = []
    outputs = []
    for _ in range(repeats):
        det = detector.detect(cloud)
        runs.append(det.timings)
        outputs.append(json.dumps([h.to_dict() for h in det.handles], sort_keys=True))
    stages = {}
    for name in STAGES + ("total",):
        vals = np.array([r[name] for r in runs])
        stages[name] = {"median": float(np.median(vals)),
                        "p90": float(np.percentile(vals, 90)),
                        "runs": [float(v) for v in vals]}
    out = {"n_points": len(cloud), "repeats": repeats, "stages": stages,
           "n_handles": len(det.handles), "deterministic": len(set(outputs)) == 1}
    if load_time is not None:
        out["load"] = float(load_time)
    return out


__all__ = ["CREDIT_FRACTION", "ObjectRecord", "SceneAnnotation", "SceneResult", "EvalReport",
           "save_annotation", "load_annotation", "load_text_annotation", "credit_handles",
           "recall_pct", "evaluate", "bench"]
