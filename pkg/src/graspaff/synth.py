"""Synthetic single-view scenes with exact ground truth.

Primitive surfaces are sampled uniformly by area, points hidden from the
sensor are removed by casting the sensor ray against every primitive, and
Gaussian noise is added last. Every generated object point is annotated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .evaluation import ObjectRecord, SceneAnnotation

KINDS = ("cuboid", "cylinder", "sphere", "plane")
_EPS = 1e-7


@dataclass(frozen=True)
class Primitive:
    """A solid (or, for ``plane``, a one-sided rectangle) placed in the world.

    ``size`` is ``(lx, ly, lz)`` for a cuboid, ``(radius, height)`` for a
    cylinder along its local z axis, ``(radius,)`` for a sphere and
    ``(lx, ly)`` for a plane facing local +z. ``rotation`` maps local to
    world axes, ``position`` is the world centre.
    """

    kind: str
    size: tuple
    position: tuple = (0.0, 0.0, 0.0)
    rotation: tuple | None = None
    name: str = ""
    graspable: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        need = {"cuboid": 3, "cylinder": 2, "sphere": 1, "plane": 2}[self.kind]
        if len(self.size) != need or min(self.size) <= 0:
            raise ValueError(f"{self.kind} needs {need} positive sizes, got {self.size}")

    @property
    def R(self):
        if self.rotation is None:
            return np.eye(3)
        return np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)

    @property
    def t(self):
        return np.asarray(self.position, dtype=np.float64)

    def to_dict(self):
        d = {"kind": self.kind, "size": list(self.size), "position": list(self.position),
             "name": self.name, "graspable": self.graspable}
        if self.rotation is not None:
            d["rotation"] = np.asarray(self.rotation, dtype=float).reshape(3, 3).tolist()
        return d

    @classmethod
    def from_dict(cls, d):
        rot = d.get("rotation")
        if rot is not None:
            rot = tuple(np.asarray(rot, dtype=float).ravel())
        elif "yaw_deg" in d:
            rot = tuple(rot_z(math.radians(d["yaw_deg"])).ravel())
        return cls(d["kind"], tuple(d["size"]), tuple(d.get("position", (0, 0, 0))), rot,
                   d.get("name", ""), d.get("graspable", True))


@dataclass(frozen=True)
class SyntheticSceneSpec:
    primitives: tuple
    density: float = 1.0e5
    sensor: tuple = (0.0, 0.0, 0.8)
    noise: float = 0.0
    occlusion: bool = True
    seed: int = 0
    scene_id: str = "synthetic"

    def __post_init__(self):
        if not self.density > 0:
            raise ValueError("density must be > 0")
        if not self.noise >= 0:
            raise ValueError("noise must be >= 0")

    def to_dict(self):
        return {"scene_id": self.scene_id, "density": self.density, "sensor": list(self.sensor),
                "noise": self.noise, "occlusion": self.occlusion, "seed": self.seed,
                "primitives": [p.to_dict() for p in self.primitives]}

    @classmethod
    def from_dict(cls, d):
        prims = tuple(Primitive.from_dict(p) for p in d.get("primitives", ()))
        return cls(prims, float(d.get("density", 1.0e5)), tuple(d.get("sensor", (0, 0, 0.8))),
                   float(d.get("noise", 0.0)), bool(d.get("occlusion", True)),
                   int(d.get("seed", 0)), str(d.get("scene_id", "synthetic")))


def rot_z(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot_x(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


# ---------------------------------------------------------------- sampling

def _count(rng, area, density):
    return int(rng.poisson(area * density))


def _sample_local(prim, density, rng):
    """Surface samples and outward normals in the primitive's local frame."""
    pts, nrm = [], []
    if prim.kind in ("cuboid", "plane"):
        if prim.kind == "cuboid":
            half = np.asarray(prim.size) / 2
            faces = [(ax, sign) for ax in range(3) for sign in (1.0, -1.0)]
        else:
            half = np.array([prim.size[0] / 2, prim.size[1] / 2, 0.0])
            faces = [(2, 1.0)]
        for ax, sign in faces:
            u, v = [i for i in range(3) if i != ax]
            n = _count(rng, 4 * half[u] * half[v], density)
            p = np.zeros((n, 3))
            p[:, u] = rng.uniform(-half[u], half[u], n)
            p[:, v] = rng.uniform(-half[v], half[v], n)
            p[:, ax] = sign * half[ax]
            q = np.zeros((n, 3))
            q[:, ax] = sign
            pts.append(p)
            nrm.append(q)
    elif prim.kind == "cylinder":
        r, h = prim.size
        n = _count(rng, 2 * math.pi * r * h, density)
        phi = rng.uniform(0, 2 * math.pi, n)
        ring = np.column_stack([np.cos(phi), np.sin(phi), np.zeros(n)])
        p = ring * r
        p[:, 2] = rng.uniform(-h / 2, h / 2, n)
        pts.append(p)
        nrm.append(ring)
        for sign in (1.0, -1.0):
            n = _count(rng, math.pi * r * r, density)
            rad = r * np.sqrt(rng.uniform(0, 1, n))
            phi = rng.uniform(0, 2 * math.pi, n)
            p = np.column_stack([rad * np.cos(phi), rad * np.sin(phi), np.full(n, sign * h / 2)])
            q = np.zeros((n, 3))
            q[:, 2] = sign
            pts.append(p)
            nrm.append(q)
    else:
        (r,) = prim.size
        n = _count(rng, 4 * math.pi * r * r, density)
        v = rng.normal(size=(n, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        pts.append(v * r)
        nrm.append(v)
    return np.concatenate(pts), np.concatenate(nrm)


# ---------------------------------------------------------------- visibility

def _entry_t(prim, origin, dirs):
    """Parameter ``t`` where each ray ``origin + t*dir`` first enters ``prim``.

    ``inf`` where the ray misses. Rays are expressed in world coordinates.
    """
    R, c = prim.R, prim.t
    o = R.T @ (origin - c)
    d = dirs @ R
    n = len(d)
    with np.errstate(divide="ignore", invalid="ignore"):
        if prim.kind in ("cuboid", "plane"):
            if prim.kind == "plane":
                t = -o[2] / d[:, 2]
                hit = t[:, None] * d[:, :2] + o[:2]
                inside = (np.abs(hit[:, 0]) <= prim.size[0] / 2) & (np.abs(hit[:, 1]) <= prim.size[1] / 2)
                return np.where(inside & np.isfinite(t), t, np.inf)
            half = np.asarray(prim.size) / 2
            t1 = (-half - o) / d
            t2 = (half - o) / d
            lo = np.fmin(t1, t2)
            hi = np.fmax(t1, t2)
            # parallel rays: inside the slab -> unbounded, outside -> miss
            par = d == 0
            inside = np.abs(o) <= half
            lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
            hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
            tin = lo.max(axis=1)
            tout = hi.min(axis=1)
            return np.where(tin <= tout, tin, np.inf)
        if prim.kind == "cylinder":
            r, h = prim.size
            a = d[:, 0] ** 2 + d[:, 1] ** 2
            b = 2 * (o[0] * d[:, 0] + o[1] * d[:, 1])
            cc = o[0] ** 2 + o[1] ** 2 - r * r
            disc = b * b - 4 * a * cc
            sq = np.sqrt(np.maximum(disc, 0))
            c_lo = np.where(a > 0, (-b - sq) / (2 * a), -np.inf if cc <= 0 else np.inf)
            c_hi = np.where(a > 0, (-b + sq) / (2 * a), np.inf if cc <= 0 else -np.inf)
            miss = (a > 0) & (disc < 0)
            z1 = (-h / 2 - o[2]) / d[:, 2]
            z2 = (h / 2 - o[2]) / d[:, 2]
            zpar = d[:, 2] == 0
            zin = abs(o[2]) <= h / 2
            z_lo = np.where(zpar, -np.inf if zin else np.inf, np.fmin(z1, z2))
            z_hi = np.where(zpar, np.inf if zin else -np.inf, np.fmax(z1, z2))
            tin = np.maximum(c_lo, z_lo)
            tout = np.minimum(c_hi, z_hi)
            return np.where(~miss & (tin <= tout), tin, np.inf)
        (r,) = prim.size
        a = np.sum(d * d, axis=1)
        b = 2 * d @ o
        cc = o @ o - r * r
        disc = b * b - 4 * a * cc
        t = (-b - np.sqrt(np.maximum(disc, 0))) / (2 * a)
        return np.where(disc >= 0, t, np.inf)
    return np.full(n, np.inf)


def visible_mask(points, normals, owner, primitives, sensor):
    """True where a surface sample faces the sensor and no primitive blocks it."""
    sensor = np.asarray(sensor, dtype=np.float64)
    dirs = points - sensor
    vis = np.einsum("ij,ij->i", -dirs, normals) > 0
    for k, prim in enumerate(primitives):
        idx = np.flatnonzero(vis)
        if len(idx) == 0:
            break
        t = _entry_t(prim, sensor, dirs[idx])
        blocked = (t > _EPS) & (t < 1 - _EPS)
        # a point may sit exactly on its own entry surface
        blocked &= ~((owner[idx] == k) & (t >= 1 - 1e-6))
        vis[idx[blocked]] = False
    return vis


def synth_scene(spec):
    """Generate ``(cloud, annotation)`` for ``spec``.

    Points are grouped by primitive in spec order. The annotation lists
    every graspable primitive with at least one visible point.
    """
    if not spec.primitives:
        raise ValueError("scene spec has no primitives")
    rng = np.random.default_rng(spec.seed)
    pts, nrm, owner = [], [], []
    for k, prim in enumerate(spec.primitives):
        p, q = _sample_local(prim, spec.density, rng)
        pts.append(p @ prim.R.T + prim.t)
        nrm.append(q @ prim.R.T)
        owner.append(np.full(len(p), k))
    pts = np.concatenate(pts)
    nrm = np.concatenate(nrm)
    owner = np.concatenate(owner)
    if spec.occlusion:
        keep = visible_mask(pts, nrm, owner, spec.primitives, spec.sensor)
        pts, owner = pts[keep], owner[keep]
    if spec.noise > 0:
        pts = pts + rng.normal(scale=spec.noise, size=pts.shape)
    cloud = PointCloud(pts, viewpoint=spec.sensor)

    objects = []
    for k, prim in enumerate(spec.primitives):
        members = np.flatnonzero(owner == k)
        if prim.graspable and len(members):
            objects.append(ObjectRecord(prim.name or f"obj{k}", prim.name or prim.kind, members))
    return cloud, SceneAnnotation(spec.scene_id, objects)


# ---------------------------------------------------------------- scene recipes

def cuboid_fixture(size=(0.10, 0.10, 0.10), density=4.0e4, noise=0.0009, seed=0):
    """One cuboid viewed obliquely so that exactly three faces are visible."""
    d = 0.6 / math.sqrt(3)
    prim = Primitive("cuboid", size, (0.0, 0.0, 0.0), name="box")
    return SyntheticSceneSpec((prim,), density, (d, d * 1.1, d * 1.2), noise, True, seed, "cuboid")


def clutter_spec(seed, n_objects=None, clearance=0.012, table=(0.46, 0.46), density=4.0e4,
                 noise=0.0009, max_width=0.05, scene_id=None):
    """Random table-top clutter of cuboids and cylinders.

    Objects are dropped one at a time at random footprint positions and
    rejected unless their footprint keeps a sampled minimum clearance to all
    earlier objects. The clearances are drawn around ``clearance`` so that a
    share of neighbors end up closer than the gripper needs.
    """
    from shapely import affinity
    from shapely.geometry import Point, box

    rng = np.random.default_rng(seed)
    if n_objects is None:
        n_objects = int(rng.integers(5, 10))
    tx, ty = table
    prims = [Primitive("plane", (tx, ty), (0.0, 0.0, 0.0), name="table", graspable=False)]
    footprints = []
    attempts = 0
    while len(footprints) < n_objects:
        attempts += 1
        if attempts > 5000:
            raise RuntimeError("could not place objects; table too small")
        kind = rng.choice(["box", "box", "standing", "lying"])
        yaw = rng.uniform(0, math.pi)
        if kind == "box":
            w = rng.uniform(0.025, max_width)
            ln = rng.uniform(0.07, 0.14)
            h = rng.uniform(0.04, 0.09)
            size, height = (ln, w, h), h
            fp = box(-ln / 2, -w / 2, ln / 2, w / 2)
            rot = rot_z(yaw)
        elif kind == "standing":
            r = rng.uniform(0.015, max_width / 2)
            h = rng.uniform(0.06, 0.11)
            size, height = (r, h), h
            fp = Point(0, 0).buffer(r, 32)
            rot = rot_z(yaw)
        else:
            r = rng.uniform(0.015, max_width / 2)
            ln = rng.uniform(0.08, 0.14)
            size, height = (r, ln), 2 * r
            fp = box(-ln / 2, -r, ln / 2, r)
            # cylinder axis along world x before yaw
            rot = rot_z(yaw) @ np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
        margin = 0.04
        x = rng.uniform(-tx / 2 + margin, tx / 2 - margin)
        y = rng.uniform(-ty / 2 + margin, ty / 2 - margin)
        fp = affinity.translate(affinity.rotate(fp, yaw, use_radians=True, origin=(0, 0)), x, y)
        need = rng.uniform(0.3, 3.0) * clearance
        if any(fp.distance(other) < need for other in footprints):
            continue
        if not box(-tx / 2, -ty / 2, tx / 2, ty / 2).contains(fp):
            continue
        footprints.append(fp)
        name = f"{kind}{len(footprints) - 1}"
        prims.append(Primitive("cuboid" if kind == "box" else "cylinder", tuple(size),
                               (x, y, height / 2), tuple(rot.ravel()), name=name))
    sensor = (rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), 0.75)
    return SyntheticSceneSpec(tuple(prims), density, sensor, noise, True, int(seed),
                              scene_id or f"clutter{seed:02d}")


__all__ = ["Primitive", "SyntheticSceneSpec", "synth_scene", "visible_mask",
           "cuboid_fixture", "clutter_spec", "rot_x", "rot_z"]
