"""Geometric hash table of semantic triangles plus PPF templates, with TRIHASH1 I/O."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from ..core import PointCloud
from ..errors import FormatError, InsufficientClasses
from .cloud import ClassifiedCloud
from .triangles import (TriangleParams, enumerate_triangles, make_triangle_set, pack_keys, quantize,
                        subsample_per_class)

MAGIC = b"TRIHASH1"

_PPF_DIST_BITS = 16
_PPF_ANGLE_BITS = 8


@dataclass(frozen=True)
class PpfParams:
    dist_step: float = 0.0025
    angle_step_deg: float = 10.0
    spacing: float = 0.008  # voxel thinning of the oriented points used for pairs
    max_points: int = 150
    max_dist: float = 0.08


@dataclass(frozen=True)
class HashDbParams:
    triangle: TriangleParams = field(default_factory=TriangleParams)
    model_spacing: float = 0.004
    model_max_per_class: int = 60
    max_triangles: int = 3_000_000
    ppf: PpfParams = field(default_factory=PpfParams)


@dataclass(frozen=True, eq=False)
class TriangleHashDb:
    """Sorted packed keys with model vertex triples; lookups are binary searches.

    ``points`` is the model vertex table the triples index into. ``quality_threshold``
    is the lowest quality among stored triangles (0 when the table is empty).
    """

    params: TriangleParams
    points: NDArray[np.float64]
    point_classes: NDArray[np.int64]
    point_weights: NDArray[np.float64]
    qkeys: NDArray[np.int64]  # (T, 7), sorted by packed key
    triples: NDArray[np.int64]  # (T, 3)
    quality_threshold: float
    ppf: PpfParams
    ppf_points: NDArray[np.float64]
    ppf_normals: NDArray[np.float64]
    ppf_qkeys: NDArray[np.int64]  # (Q, 4), sorted by packed key
    ppf_pairs: NDArray[np.int64]  # (Q, 2)
    model: ClassifiedCloud
    surface: Optional[PointCloud] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "keys", pack_keys(self.qkeys))
        object.__setattr__(self, "ppf_keys", pack_ppf(self.ppf_qkeys))

    @property
    def n_triangles(self) -> int:
        return len(self.triples)

    @property
    def n_ppf(self) -> int:
        return len(self.ppf_pairs)

    def lookup(self, key) -> NDArray[np.float64]:
        """Model vertex triples (M, 3, 3) stored under one exact 7-D key."""
        k = pack_keys(np.asarray(key, dtype=np.int64).reshape(1, 7))[0]
        lo, hi = np.searchsorted(self.keys, [k, k + 1])
        return self.points[self.triples[lo:hi]]

    def lookup_ranges(self, packed: NDArray[np.int64]) -> tuple[NDArray, NDArray]:
        lo = np.searchsorted(self.keys, packed, side="left")
        hi = np.searchsorted(self.keys, packed, side="right")
        return lo, hi

    def save(self, path) -> None:
        Path(path).write_bytes(serialize(self))

    @classmethod
    def load(cls, path) -> "TriangleHashDb":
        return deserialize(Path(path).read_bytes())


# ---- PPF ---------------------------------------------------------------------------

def _angle(a: NDArray, b: NDArray) -> NDArray:
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    c = np.sum(a * b, axis=-1) / np.maximum(na * nb, 1e-18)
    return np.arccos(np.clip(c, -1.0, 1.0))


def point_pair_features(p1, n1, p2, n2) -> NDArray[np.float64]:
    """(|d|, angle(n1, d), angle(n2, d), angle(n1, n2)) per row, d = p2 - p1."""
    d = np.asarray(p2, float) - np.asarray(p1, float)
    return np.stack([np.linalg.norm(d, axis=-1), _angle(n1, d), _angle(n2, d), _angle(n1, n2)], axis=-1)


def quantize_ppf(f: NDArray, params: PpfParams) -> NDArray[np.int64]:
    step = np.deg2rad(params.angle_step_deg)
    q = np.empty(f.shape, dtype=np.int64)
    q[..., 0] = np.floor(f[..., 0] / params.dist_step)
    q[..., 1:] = np.floor(f[..., 1:] / step)
    return q


def pack_ppf(q: NDArray) -> NDArray[np.int64]:
    q = np.asarray(q, dtype=np.int64).reshape(-1, 4)
    out = np.clip(q[:, 0], 0, (1 << _PPF_DIST_BITS) - 1)
    for col in range(1, 4):
        out = (out << _PPF_ANGLE_BITS) | np.clip(q[:, col], 0, (1 << _PPF_ANGLE_BITS) - 1)
    return out


def thin_points(points: NDArray, spacing: float, max_points: int) -> NDArray[np.int64]:
    if len(points) == 0:
        return np.zeros(0, np.int64)
    vox = np.floor(points / spacing).astype(np.int64)
    _, first = np.unique(vox, axis=0, return_index=True)
    sel = np.sort(first)
    if len(sel) > max_points:
        sel = sel[np.linspace(0, len(sel) - 1, max_points).round().astype(np.int64)]
    return sel


def oriented_pairs(points: NDArray, normals: NDArray, params: PpfParams) -> tuple[NDArray, NDArray]:
    """All ordered pairs (i != j) within max_dist; returns (pairs, quantized features)."""
    n = len(points)
    if n < 2:
        return np.zeros((0, 2), np.int64), np.zeros((0, 4), np.int64)
    d = np.linalg.norm(points[:, None] - points[None], axis=-1)
    ii, jj = np.nonzero((d > 0) & (d <= params.max_dist))
    f = point_pair_features(points[ii], normals[ii], points[jj], normals[jj])
    return np.stack([ii, jj], axis=1), quantize_ppf(f, params)


# ---- build -------------------------------------------------------------------------

def build_hash_db(model_cloud: ClassifiedCloud, params: Optional[HashDbParams] = None,
                  surface: Optional[PointCloud] = None) -> TriangleHashDb:
    """Enumerate model triangles into a sorted key table and build PPF templates."""
    params = params or HashDbParams()
    tp = params.triangle
    n_classes = len(model_cloud.classes())
    has_normals = model_cloud.normals is not None
    if n_classes < 3 and not has_normals:
        raise InsufficientClasses("fewer than 3 classes and no normals for PPF templates")

    cand = subsample_per_class(model_cloud, params.model_spacing, params.model_max_per_class)
    pts = model_cloud.points[cand]
    cls = model_cloud.class_ids[cand]
    wts = model_cloud.weights[cand]
    if n_classes >= 3:
        center = pts.mean(axis=0)
        r0 = max(float(np.linalg.norm(pts - center, axis=1).max()), 1e-9)
        local = enumerate_triangles(pts, cls, tp)
        tris = make_triangle_set(pts, cls, local, center, r0)
        if len(tris) > params.max_triangles:
            srt = np.sort(tris.indices, axis=1)
            keep = np.lexsort((srt[:, 2], srt[:, 1], srt[:, 0], -tris.quality))[:params.max_triangles]
            tris = tris[np.sort(keep)]
        qk = quantize(tris, tp)
        order = np.argsort(pack_keys(qk), kind="stable")
        qkeys, triples = qk[order], tris.indices[order]
        qthr = float(tris.quality.min()) if len(tris) else 0.0
    else:
        qkeys, triples, qthr = np.zeros((0, 7), np.int64), np.zeros((0, 3), np.int64), 0.0

    if has_normals:
        sel = thin_points(model_cloud.points, params.ppf.spacing, params.ppf.max_points)
        ppts, pnrm = model_cloud.points[sel], model_cloud.normals[sel]
        pairs, pq = oriented_pairs(ppts, pnrm, params.ppf)
        order = np.argsort(pack_ppf(pq), kind="stable")
        pairs, pq = pairs[order], pq[order]
    else:
        ppts, pnrm = np.zeros((0, 3)), np.zeros((0, 3))
        pairs, pq = np.zeros((0, 2), np.int64), np.zeros((0, 4), np.int64)

    return TriangleHashDb(tp, pts, cls, wts, qkeys, triples, qthr, params.ppf,
                          ppts, pnrm, pq, pairs, model_cloud, surface)


# ---- TRIHASH1 ----------------------------------------------------------------------
# Layout (little-endian):
#   magic "TRIHASH1"
#   header: side_step, area_step, min_side, max_side, min_area, point_spacing,
#           quality_threshold (7 x f64); max_points_per_class, n_points, n_triangles (3 x u64)
#   points: n_points x (x, y, z f64, class i64, weight f64)
#   triangles: n_triangles x (7 x i32 key, 3 x u32 vertex index)
#   ppf header: dist_step, angle_step_deg, spacing, max_dist (4 x f64);
#               max_points, n_ppf_points, n_ppf_pairs (3 x u64)
#   ppf points: n_ppf_points x (x, y, z, nx, ny, nz f64)
#   ppf records: n_ppf_pairs x (4 x i32 key, 2 x u32 point index)
#   model cloud: n (u64), has_normals (u64), then n x (x, y, z f64, class i64, weight f64,
#                nx, ny, nz f64)
#   surface cloud: n (u64), then n x (x, y, z, nx, ny, nz f64)

_PT = np.dtype([("p", "<f8", 3), ("c", "<i8"), ("w", "<f8")])
_TRI = np.dtype([("k", "<i4", 7), ("v", "<u4", 3)])
_PPT = np.dtype([("p", "<f8", 3), ("n", "<f8", 3)])
_PPR = np.dtype([("k", "<i4", 4), ("v", "<u4", 2)])
_MDL = np.dtype([("p", "<f8", 3), ("c", "<i8"), ("w", "<f8"), ("n", "<f8", 3)])


def serialize(db: TriangleHashDb) -> bytes:
    tp, pp = db.params, db.ppf
    out = [MAGIC, struct.pack("<7d3Q", tp.side_step, tp.area_step, tp.min_side, tp.max_side,
                              tp.min_area, tp.point_spacing, db.quality_threshold,
                              tp.max_points_per_class, len(db.points), db.n_triangles)]
    a = np.zeros(len(db.points), _PT)
    a["p"], a["c"], a["w"] = db.points, db.point_classes, db.point_weights
    out.append(a.tobytes())
    t = np.zeros(db.n_triangles, _TRI)
    t["k"], t["v"] = db.qkeys, db.triples
    out.append(t.tobytes())
    out.append(struct.pack("<4d3Q", pp.dist_step, pp.angle_step_deg, pp.spacing, pp.max_dist,
                           pp.max_points, len(db.ppf_points), db.n_ppf))
    b = np.zeros(len(db.ppf_points), _PPT)
    b["p"], b["n"] = db.ppf_points, db.ppf_normals
    out.append(b.tobytes())
    r = np.zeros(db.n_ppf, _PPR)
    r["k"], r["v"] = db.ppf_qkeys, db.ppf_pairs
    out.append(r.tobytes())
    m = db.model
    has_n = m.normals is not None
    out.append(struct.pack("<2Q", len(m), int(has_n)))
    c = np.zeros(len(m), _MDL)
    c["p"], c["c"], c["w"] = m.points, m.class_ids, m.weights
    if has_n:
        c["n"] = m.normals
    out.append(c.tobytes())
    s = db.surface
    out.append(struct.pack("<Q", 0 if s is None else len(s)))
    if s is not None:
        d = np.zeros(len(s), _PPT)
        d["p"] = s.points
        d["n"] = s.normals if s.normals is not None else 0.0
        out.append(d.tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("truncated TRIHASH1 data")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype: np.dtype, n: int) -> np.ndarray:
        return np.frombuffer(self.take(dtype.itemsize * n), dtype=dtype, count=n)


def deserialize(buf: bytes) -> TriangleHashDb:
    rd = _Reader(buf)
    if rd.take(8) != MAGIC:
        raise FormatError("not a TRIHASH1 file")
    (side_step, area_step, min_side, max_side, min_area, spacing, qthr,
     max_pc, n_pts, n_tri) = rd.unpack("<7d3Q")
    tp = TriangleParams(side_step=side_step, area_step=area_step, min_side=min_side,
                        max_side=max_side, min_area=min_area, point_spacing=spacing,
                        max_points_per_class=int(max_pc))
    a = rd.array(_PT, n_pts)
    t = rd.array(_TRI, n_tri)
    dist_step, angle_step, ppf_spacing, max_dist, ppf_max, n_pp, n_pr = rd.unpack("<4d3Q")
    pp = PpfParams(dist_step=dist_step, angle_step_deg=angle_step, spacing=ppf_spacing,
                   max_points=int(ppf_max), max_dist=max_dist)
    b = rd.array(_PPT, n_pp)
    r = rd.array(_PPR, n_pr)
    n_m, has_n = rd.unpack("<2Q")
    c = rd.array(_MDL, n_m)
    model = ClassifiedCloud(c["p"].copy(), c["c"].copy(), c["w"].copy(),
                            c["n"].copy() if has_n else None)
    (n_s,) = rd.unpack("<Q")
    surface = None
    if n_s:
        d = rd.array(_PPT, n_s)
        surface = PointCloud(d["p"].copy(), d["n"].copy())
    if rd.pos != len(buf):
        raise FormatError("trailing bytes after TRIHASH1 data")
    return TriangleHashDb(tp, a["p"].copy(), a["c"].astype(np.int64), a["w"].copy(),
                          t["k"].astype(np.int64), t["v"].astype(np.int64), qthr, pp,
                          b["p"].copy(), b["n"].copy(), r["k"].astype(np.int64),
                          r["v"].astype(np.int64), model, surface)
