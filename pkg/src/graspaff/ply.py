"""ASCII PLY export of segmentations and grasp handles for offline viewing."""
from __future__ import annotations

import colorsys

import numpy as np

from .pcd import atomic_write

EDGE_COLOR = (0, 0, 255)
HANDLE_COLOR = (255, 255, 0)
UNLABELED_COLOR = (128, 128, 128)
AXIS_COLORS = ((255, 0, 0), (0, 255, 0), (0, 255, 255))
_RESERVED = {EDGE_COLOR, HANDLE_COLOR, UNLABELED_COLOR}


def segment_palette(n):
    """``n`` distinct colors spread by the golden angle in hue."""
    out = []
    for i in range(n):
        h = (i * 0.618033988749895) % 1.0
        rgb = tuple(int(round(255 * c)) for c in colorsys.hsv_to_rgb(h, 0.65, 0.9))
        while rgb in _RESERVED or rgb in out:
            rgb = (rgb[0], rgb[1], (rgb[2] + 1) % 256)
        out.append(rgb)
    return np.array(out, dtype=np.uint8).reshape(n, 3)


def vertex_colors(cloud, segmentation=None, handles=None):
    """Per-point colors: segment palette, edge points, handle patches on top."""
    n = len(cloud)
    if segmentation is None:
        if cloud.colors is not None:
            colors = np.array(cloud.colors, dtype=np.uint8)
        else:
            colors = np.tile(np.array(UNLABELED_COLOR, dtype=np.uint8), (n, 1))
    else:
        labels = np.asarray(segmentation.labels)
        if len(labels) != n:
            raise ValueError(f"segmentation has {len(labels)} labels for {n} points")
        colors = np.tile(np.array(UNLABELED_COLOR, dtype=np.uint8), (n, 1))
        pal = segment_palette(segmentation.n_segments)
        lab = labels >= 0
        colors[lab] = pal[labels[lab]]
        colors[np.asarray(segmentation.edge_points, dtype=np.int64)] = EDGE_COLOR
    for h in handles or ():
        colors[np.asarray(h.patch_indices, dtype=np.int64)] = HANDLE_COLOR
    return colors


def export_ply(cloud, path, segmentation=None, handles=None, glyph_length=0.03):
    """Write an ASCII PLY of ``cloud`` colored by ``segmentation``.

    Each handle adds a frame glyph: six vertices (origin and tip of the
    ``f``, ``a`` and ``n`` axes) and three edges joining them.
    """
    handles = list(handles or ())
    colors = vertex_colors(cloud, segmentation, handles)
    verts = [cloud.points]
    vcols = [colors]
    edges = []
    base = len(cloud)
    for h in handles:
        for i in range(3):
            verts.append(np.vstack([h.position, h.position + glyph_length * h.axes[:, i]]))
            vcols.append(np.array([AXIS_COLORS[i], AXIS_COLORS[i]], dtype=np.uint8))
            edges.append((base, base + 1))
            base += 2
    P = np.vstack(verts)
    C = np.vstack(vcols)
    lines = ["ply", "format ascii 1.0", f"element vertex {len(P)}",
             "property float x", "property float y", "property float z",
             "property uchar red", "property uchar green", "property uchar blue"]
    if edges:
        lines += [f"element edge {len(edges)}", "property int vertex1", "property int vertex2"]
    lines.append("end_header")
    lines += [f"{x:.9g} {y:.9g} {z:.9g} {r} {g} {b}"
              for (x, y, z), (r, g, b) in zip(P.tolist(), C.tolist())]
    lines += [f"{a} {b}" for a, b in edges]
    atomic_write(path, "\n".join(lines) + "\n")


def load_ply(path):
    """Read an ASCII PLY written by :func:`export_ply`.

    Returns ``(points, colors, edges)``.
    """
    with open(path) as fh:
        if fh.readline().strip() != "ply":
            raise ValueError(f"{path}: not a PLY file")
        n_vert = n_edge = 0
        current = None
        for line in fh:
            tok = line.split()
            if not tok:
                continue
            if tok[0] == "format" and tok[1] != "ascii":
                raise ValueError(f"{path}: only ASCII PLY is supported")
            if tok[0] == "element":
                current = tok[1]
                if current == "vertex":
                    n_vert = int(tok[2])
                elif current == "edge":
                    n_edge = int(tok[2])
            if tok[0] == "end_header":
                break
        body = [fh.readline().split() for _ in range(n_vert + n_edge)]
    V = np.array(body[:n_vert], dtype=np.float64).reshape(n_vert, -1)
    E = np.array(body[n_vert:], dtype=np.int64).reshape(n_edge, 2)
    return V[:, :3], V[:, 3:6].astype(np.uint8), E


__all__ = ["export_ply", "load_ply", "vertex_colors", "segment_palette", "EDGE_COLOR",
           "HANDLE_COLOR", "UNLABELED_COLOR"]
