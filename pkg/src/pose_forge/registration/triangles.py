"""Semantic triangles over classified clouds and their 7-D pose-invariant keys."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from ..errors import DataError, InsufficientClasses
from .cloud import ClassifiedCloud

# bit widths of the packed key: 3 class ids, 3 side bins, 1 area bin (63 bits)
_CLASS_BITS = 9
_SIDE_BITS = 8
_AREA_BITS = 12


@dataclass(frozen=True)
class TriangleParams:
    side_step: float = 0.005  # meters
    area_step: float = 25e-6  # square meters
    min_side: float = 0.01
    max_side: float = 0.06
    min_area: float = 5e-5
    point_spacing: float = 0.006  # per-class subsampling voxel before enumeration
    max_points_per_class: int = 40

    def __post_init__(self) -> None:
        if self.side_step <= 0 or self.area_step <= 0:
            raise DataError("quantization steps must be positive")
        if not (0 < self.min_side < self.max_side):
            raise DataError("need 0 < min_side < max_side")


@dataclass(frozen=True, eq=False)
class SemanticTriangle:
    indices: NDArray[np.int64]  # into the source cloud
    classes: NDArray[np.int64]
    sides: NDArray[np.float64]  # |v0v1|, |v1v2|, |v2v0|
    area: float
    centroid: NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class TriangleSet:
    """Columnar triangles, vertices already in canonical (ascending class) order."""

    indices: NDArray[np.int64]  # (T, 3)
    classes: NDArray[np.int64]  # (T, 3)
    sides: NDArray[np.float64]  # (T, 3)
    area: NDArray[np.float64]
    centroid: NDArray[np.float64]  # (T, 3)
    quality: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.indices)

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return SemanticTriangle(self.indices[i], self.classes[i], self.sides[i],
                                    float(self.area[i]), self.centroid[i])
        return TriangleSet(self.indices[i], self.classes[i], self.sides[i], self.area[i],
                           self.centroid[i], self.quality[i])

    def __iter__(self):
        return (self[i] for i in range(len(self)))


def triangle_geometry(p0: NDArray, p1: NDArray, p2: NDArray) -> tuple[NDArray, NDArray]:
    """Side lengths (|p0p1|, |p1p2|, |p2p0|) and areas for stacked vertices."""
    s = np.stack([np.linalg.norm(p1 - p0, axis=-1), np.linalg.norm(p2 - p1, axis=-1),
                  np.linalg.norm(p0 - p2, axis=-1)], axis=-1)
    area = 0.5 * np.linalg.norm(np.cross(p1 - p0, p2 - p0), axis=-1)
    return s, area


def canonical_order(classes: NDArray) -> NDArray[np.int64]:
    """Permutation putting each row's vertices in ascending class order."""
    return np.argsort(classes, axis=-1, kind="stable")


def make_triangle_set(points: NDArray, ids: NDArray, triples: NDArray,
                      center: NDArray, r0: float) -> TriangleSet:
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    cls = ids[triples]
    perm = canonical_order(cls)
    triples = np.take_along_axis(triples, perm, axis=1)
    cls = np.take_along_axis(cls, perm, axis=1)
    v = points[triples]
    sides, area = triangle_geometry(v[:, 0], v[:, 1], v[:, 2])
    centroid = v.mean(axis=1)
    quality = area * (1.0 + np.linalg.norm(centroid - center, axis=1) / r0)
    return TriangleSet(triples, cls, sides, area, centroid, quality)


def subsample_per_class(cloud: ClassifiedCloud, spacing: float, max_per_class: int) -> NDArray[np.int64]:
    """Deterministic voxel thinning per class; returns sorted cloud indices."""
    keep = []
    for c in cloud.classes():
        idx = np.flatnonzero(cloud.class_ids == c)
        vox = np.floor(cloud.points[idx] / spacing).astype(np.int64)
        # first point (by index) of each occupied voxel
        _, first = np.unique(vox, axis=0, return_index=True)
        sel = idx[np.sort(first)]
        if len(sel) > max_per_class:
            sel = sel[np.linspace(0, len(sel) - 1, max_per_class).round().astype(np.int64)]
        keep.append(sel)
    if not keep:
        return np.zeros(0, np.int64)
    return np.sort(np.concatenate(keep))


def enumerate_triangles(points: NDArray, ids: NDArray, params: TriangleParams) -> NDArray[np.int64]:
    """All index triples (i < j < k) with distinct classes, side bounds and area gate."""
    n = len(points)
    if n < 3:
        return np.zeros((0, 3), np.int64)
    d = np.linalg.norm(points[:, None] - points[None], axis=-1)
    ok = (ids[:, None] != ids[None]) & (d >= params.min_side) & (d <= params.max_side)
    out = []
    for i in range(n - 2):
        js = np.flatnonzero(ok[i, i + 1:]) + i + 1
        if len(js) < 2:
            continue
        jj, kk = np.nonzero(np.triu(ok[np.ix_(js, js)], 1))
        if len(jj):
            t = np.empty((len(jj), 3), np.int64)
            t[:, 0] = i
            t[:, 1] = js[jj]
            t[:, 2] = js[kk]
            out.append(t)
    if not out:
        return np.zeros((0, 3), np.int64)
    t = np.concatenate(out)
    _, area = triangle_geometry(points[t[:, 0]], points[t[:, 1]], points[t[:, 2]])
    return t[area > params.min_area]


def select_semantic_triangles(cloud: ClassifiedCloud, object_center: Optional[NDArray] = None,
                              max_count: int = 300,
                              params: Optional[TriangleParams] = None,
                              candidates: Optional[NDArray] = None) -> TriangleSet:
    """Top ``max_count`` triangles by quality = area * (1 + |centroid - center| / r0).

    ``object_center`` defaults to the classified-cloud centroid and r0 is the
    bounding-sphere radius about it. ``candidates`` restricts the vertex pool
    (default: per-class subsampling). Ties break on ascending vertex indices.
    """
    params = params or TriangleParams()
    classified = np.flatnonzero(cloud.class_ids >= 0)
    if len(np.unique(cloud.class_ids[classified])) < 3:
        raise InsufficientClasses("semantic triangles need at least 3 classes")
    pts = cloud.points
    center = pts[classified].mean(axis=0) if object_center is None else np.asarray(object_center, float)
    r0 = max(float(np.linalg.norm(pts[classified] - center, axis=1).max()), 1e-9)
    if candidates is None:
        candidates = subsample_per_class(cloud, params.point_spacing, params.max_points_per_class)
    candidates = np.asarray(candidates, dtype=np.int64)
    local = enumerate_triangles(pts[candidates], cloud.class_ids[candidates], params)
    tris = make_triangle_set(pts, cloud.class_ids, candidates[local], center, r0)
    if len(tris) == 0:
        return tris
    srt = np.sort(tris.indices, axis=1)
    order = np.lexsort((srt[:, 2], srt[:, 1], srt[:, 0], -tris.quality))
    return tris[order[:max_count]]


def quantize(tris: TriangleSet, params: TriangleParams) -> NDArray[np.int64]:
    """(T, 7) integer keys: classes, side bins, area bin."""
    q = np.empty((len(tris), 7), dtype=np.int64)
    q[:, :3] = tris.classes
    q[:, 3:6] = np.floor(tris.sides / params.side_step).astype(np.int64)
    q[:, 6] = np.floor(tris.area / params.area_step).astype(np.int64)
    return q


def triangle_feature_key(t: SemanticTriangle, params: Optional[TriangleParams] = None) -> tuple[int, ...]:
    """7-tuple key of one triangle; invariant to vertex order and rigid motion."""
    params = params or TriangleParams()
    cls = np.asarray(t.classes)
    if len(set(cls.tolist())) != 3:
        raise DataError("semantic triangle classes must be distinct")
    perm = canonical_order(cls)
    # sides are stored opposite-free as edges (v0v1, v1v2, v2v0); re-derive from
    # the permuted vertex order so the canonical rotation is applied consistently
    s = np.asarray(t.sides, dtype=np.float64)
    edge = {(0, 1): s[0], (1, 2): s[1], (0, 2): s[2]}
    a, b, c = perm
    sides = np.array([edge[tuple(sorted((a, b)))], edge[tuple(sorted((b, c)))],
                      edge[tuple(sorted((c, a)))]])
    bins = np.floor(sides / params.side_step).astype(np.int64)
    return (int(cls[a]), int(cls[b]), int(cls[c]), int(bins[0]), int(bins[1]), int(bins[2]),
            int(np.floor(t.area / params.area_step)))


def pack_keys(q: NDArray) -> NDArray[np.int64]:
    """Pack (T, 7) quantized keys into sortable int64 scalars."""
    q = np.asarray(q, dtype=np.int64).reshape(-1, 7)
    if len(q) == 0:
        return np.zeros(0, np.int64)
    if q[:, :3].min() < 0 or q[:, :3].max() >= 1 << _CLASS_BITS:
        raise DataError("class id outside packable range")
    sides = np.clip(q[:, 3:6], 0, (1 << _SIDE_BITS) - 1)
    area = np.clip(q[:, 6], 0, (1 << _AREA_BITS) - 1)
    out = np.zeros(len(q), dtype=np.int64)
    for col in range(3):
        out = (out << _CLASS_BITS) | q[:, col]
    for col in range(3):
        out = (out << _SIDE_BITS) | sides[:, col]
    return (out << _AREA_BITS) | area
