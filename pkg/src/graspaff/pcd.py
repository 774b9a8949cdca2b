"""Reader and writer for PCD v0.7 files (ASCII and uncompressed binary)."""
from __future__ import annotations

import os

import numpy as np

from .cloud import PointCloud

_HEADER_KEYS = ("VERSION", "FIELDS", "SIZE", "TYPE", "COUNT", "WIDTH", "HEIGHT",
                "VIEWPOINT", "POINTS", "DATA")
_NP_TYPES = {("F", 4): "<f4", ("F", 8): "<f8", ("U", 1): "<u1", ("U", 2): "<u2",
             ("U", 4): "<u4", ("U", 8): "<u8", ("I", 1): "<i1", ("I", 2): "<i2",
             ("I", 4): "<i4", ("I", 8): "<i8"}


class PCDError(ValueError):
    """Malformed PCD input. ``lineno`` is the 1-based line, when known."""

    def __init__(self, message, path=None, lineno=None):
        where = f"{path}:" if path else ""
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)
        self.lineno = lineno


class UnsupportedPCDError(PCDError):
    """The file uses an encoding this reader does not handle."""


def _parse_header(raw, path):
    header = {}
    pos = 0
    lineno = 0
    while True:
        end = raw.find(b"\n", pos)
        if end < 0:
            raise PCDError("header ended before the DATA line", path, lineno + 1)
        lineno += 1
        line = raw[pos:end].decode("ascii", errors="replace").strip()
        pos = end + 1
        if not line or line.startswith("#"):
            continue
        key, *vals = line.split()
        key = key.upper()
        if key not in _HEADER_KEYS:
            raise PCDError(f"unknown header key {key!r}", path, lineno)
        header[key] = (vals, lineno)
        if key == "DATA":
            return header, pos, lineno


def _layout(header, path):
    def get(key, default=None):
        if key not in header:
            if default is not None:
                return default
            raise PCDError(f"missing {key} header line", path)
        return header[key]

    fields, fl = get("FIELDS")
    if not {"x", "y", "z"} <= set(fields):
        raise PCDError("FIELDS must include x, y and z", path, fl)
    n = len(fields)
    sizes, sl = get("SIZE")
    types, tl = get("TYPE")
    counts, cl = get("COUNT", (["1"] * n, fl))
    for name, vals, ln in (("SIZE", sizes, sl), ("TYPE", types, tl), ("COUNT", counts, cl)):
        if len(vals) != n:
            raise PCDError(f"{name} lists {len(vals)} entries for {n} fields", path, ln)
    try:
        sizes = [int(v) for v in sizes]
        counts = [int(v) for v in counts]
    except ValueError:
        raise PCDError("SIZE and COUNT must be integers", path, sl) from None
    types = [t.upper() for t in types]
    for t, s in zip(types, sizes):
        if (t, s) not in _NP_TYPES:
            raise PCDError(f"unsupported TYPE/SIZE pair {t}{s}", path, tl)
    if min(counts) < 1:
        raise PCDError("COUNT entries must be >= 1", path, cl)

    try:
        width = int(get("WIDTH")[0][0])
        height = int(get("HEIGHT", (["1"], None))[0][0])
        points = int(get("POINTS", ([str(width * height)], None))[0][0])
    except (ValueError, IndexError):
        raise PCDError("WIDTH, HEIGHT and POINTS must be integers", path) from None
    if width * height != points:
        raise PCDError(f"WIDTH*HEIGHT = {width * height} but POINTS = {points}",
                       path, header.get("POINTS", (None, None))[1])
    vp, vl = get("VIEWPOINT", (["0", "0", "0", "1", "0", "0", "0"], None))
    try:
        viewpoint = np.array([float(v) for v in vp[:3]])
    except ValueError:
        raise PCDError("VIEWPOINT must be numeric", path, vl) from None
    if len(viewpoint) != 3:
        raise PCDError("VIEWPOINT needs 7 numbers", path, vl)
    return fields, sizes, types, counts, width, height, points, viewpoint


def _unpack_rgb(col):
    """Packed 0x00RRGGBB (stored as float or integer) to (n, 3) uint8."""
    col = np.ascontiguousarray(col)
    if col.dtype.kind == "f":
        col = col.astype("<f4").view("<u4")
    v = col.astype(np.uint32)
    return np.stack([(v >> 16) & 255, (v >> 8) & 255, v & 255], axis=1).astype(np.uint8)


def load_pcd(path):
    """Load a PCD file into a :class:`PointCloud`.

    Rows with a non-finite coordinate are dropped and counted in
    ``cloud.dropped``. Colors are read from an ``rgb`` or ``rgba`` field.

    Raises:
        FileNotFoundError: ``path`` does not exist.
        PCDError: malformed header or data, with the offending line.
        UnsupportedPCDError: compressed binary data.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    header, offset, data_line = _parse_header(raw, path)
    fields, sizes, types, counts, width, height, n, viewpoint = _layout(header, path)
    enc = header["DATA"][0][0].lower() if header["DATA"][0] else ""
    if enc == "binary_compressed":
        raise UnsupportedPCDError("compressed binary PCD is not supported", path, data_line)
    if enc not in ("ascii", "binary"):
        raise PCDError(f"unknown DATA encoding {enc!r}", path, data_line)

    cols = {}
    if enc == "binary":
        dtype = np.dtype([(f"{name}_{i}", _NP_TYPES[(t, s)], (c,))
                          for i, (name, t, s, c) in enumerate(zip(fields, types, sizes, counts))])
        need = dtype.itemsize * n
        if len(raw) - offset < need:
            raise PCDError(f"binary data holds {(len(raw) - offset) // dtype.itemsize} of "
                           f"{n} points", path, data_line)
        rec = np.frombuffer(raw, dtype=dtype, count=n, offset=offset)
        for i, name in enumerate(fields):
            cols.setdefault(name, rec[f"{name}_{i}"][:, 0])
    else:
        per_row = sum(counts)
        lines = raw[offset:].decode("ascii", errors="replace").splitlines()
        rows = []
        for k, line in enumerate(lines):
            tok = line.split()
            if not tok:
                continue
            if len(tok) != per_row:
                raise PCDError(f"expected {per_row} values per point, found {len(tok)}",
                               path, data_line + 1 + k)
            rows.append((tok, data_line + 1 + k))
        if len(rows) != n:
            raise PCDError(f"header declares {n} points but DATA holds {len(rows)}", path,
                           rows[-1][1] if rows else data_line)
        try:
            table = np.array([r[0] for r in rows], dtype=np.float64).reshape(n, per_row)
        except ValueError:
            for tok, ln in rows:
                try:
                    [float(t) for t in tok]
                except ValueError:
                    raise PCDError("non-numeric value", path, ln) from None
            raise
        start = 0
        for name, c in zip(fields, counts):
            cols.setdefault(name, table[:, start])
            start += c

    pts = np.stack([cols["x"], cols["y"], cols["z"]], axis=1).astype(np.float64)
    colors = None
    for key in ("rgb", "rgba"):
        if key in cols:
            src = cols[key]
            if enc == "ascii":
                t = types[fields.index(key)]
                src = src.astype(np.float32) if t == "F" else src.astype(np.uint32)
            colors = _unpack_rgb(src)
            break
    keep = np.isfinite(pts).all(axis=1)
    dropped = int(np.count_nonzero(~keep))
    return PointCloud(pts[keep], None if colors is None else colors[keep], viewpoint,
                      width=width if height > 1 else int(keep.sum()), height=height,
                      dropped=dropped, source_index=np.flatnonzero(keep) if dropped else None)


def write_pcd(cloud, path, binary=False):
    """Write ``cloud`` as PCD with double-precision coordinates.

    Colors, when present, go to a packed ``rgb`` field of type ``U4``. The
    file appears atomically: data goes to a temporary file that is renamed.
    """
    n = len(cloud)
    has_rgb = cloud.colors is not None
    fields = "x y z rgb" if has_rgb else "x y z"
    size = "8 8 8 4" if has_rgb else "8 8 8"
    typ = "F F F U" if has_rgb else "F F F"
    count = "1 1 1 1" if has_rgb else "1 1 1"
    organized = cloud.height > 1 and cloud.width * cloud.height == n
    width, height = (cloud.width, cloud.height) if organized else (n, 1)
    vp = " ".join(_fmt(v) for v in cloud.viewpoint)
    header = (f"# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\nFIELDS {fields}\n"
              f"SIZE {size}\nTYPE {typ}\nCOUNT {count}\nWIDTH {width}\nHEIGHT {height}\n"
              f"VIEWPOINT {vp} 1 0 0 0\nPOINTS {n}\nDATA {'binary' if binary else 'ascii'}\n")
    if has_rgb:
        c = cloud.colors.astype(np.uint32)
        packed = (c[:, 0] << 16) | (c[:, 1] << 8) | c[:, 2]
    if binary:
        dt = [("x", "<f8"), ("y", "<f8"), ("z", "<f8")] + ([("rgb", "<u4")] if has_rgb else [])
        rec = np.empty(n, dtype=np.dtype(dt))
        rec["x"], rec["y"], rec["z"] = cloud.points.T
        if has_rgb:
            rec["rgb"] = packed
        body = rec.tobytes()
    else:
        xyz = [" ".join(_fmt(v) for v in p) for p in cloud.points]
        if has_rgb:
            xyz = [f"{s} {int(v)}" for s, v in zip(xyz, packed)]
        body = ("\n".join(xyz) + ("\n" if n else "")).encode("ascii")
    atomic_write(path, header.encode("ascii") + body)


def _fmt(v):
    return repr(float(v))


def atomic_write(path, data):
    """Write bytes or text to ``path`` via a temporary file and rename."""
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        with open(tmp, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


__all__ = ["PCDError", "UnsupportedPCDError", "load_pcd", "write_pcd", "atomic_write"]
