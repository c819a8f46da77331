"""Classified edge clouds and scene classification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from ..colorpair import ClassDb, ExtractionParams, classify_pairs, extract_color_pairs
from ..core import RgbdFrame, Se3Pose, _frozen
from ..errors import DataError, EmptyMask, NoValidDepth


@dataclass(frozen=True, eq=False)
class ClassifiedCloud:
    points: NDArray[np.float64]
    class_ids: NDArray[np.int64]
    weights: NDArray[np.float64]
    normals: Optional[NDArray[np.float64]] = None

    def __post_init__(self) -> None:
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        ids = np.asarray(self.class_ids, dtype=np.int64).reshape(-1)
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if len(ids) != len(p) or len(w) != len(p):
            raise DataError("points, class_ids and weights must have equal length")
        if np.any(w[ids < 0] != 0):
            raise DataError("unclassified points must have weight 0")
        if np.any((w < 0) | (w > 1)):
            raise DataError("weights must lie in [0, 1]")
        object.__setattr__(self, "points", _frozen(p))
        object.__setattr__(self, "class_ids", _frozen(ids))
        object.__setattr__(self, "weights", _frozen(w))
        if self.normals is not None:
            n = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(n) != len(p):
                raise DataError("normals length does not match points")
            object.__setattr__(self, "normals", _frozen(n))

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls) -> "ClassifiedCloud":
        return cls(np.zeros((0, 3)), np.zeros(0, np.int64), np.zeros(0))

    def classes(self) -> NDArray[np.int64]:
        """Distinct class ids present, excluding -1."""
        return np.unique(self.class_ids[self.class_ids >= 0])

    def subset(self, sel) -> "ClassifiedCloud":
        n = None if self.normals is None else self.normals[sel]
        return ClassifiedCloud(self.points[sel], self.class_ids[sel], self.weights[sel], n)

    def classified(self) -> "ClassifiedCloud":
        return self.subset(self.class_ids >= 0)

    def transformed(self, pose: Se3Pose) -> "ClassifiedCloud":
        n = None if self.normals is None else self.normals @ pose.rotation.T
        return ClassifiedCloud(pose.apply(self.points), self.class_ids, self.weights, n)

    def centroid(self) -> NDArray[np.float64]:
        return self.points.mean(axis=0)


def depth_normals(frame: RgbdFrame, uv: NDArray, step: int = 2) -> NDArray[np.float64]:
    """Camera-facing unit normals from central depth differences at pixels ``uv``.

    Rows without valid neighbors come back as NaN.
    """
    uv = np.asarray(uv).reshape(-1, 2).astype(np.int64)
    h, w = frame.shape
    d = frame.depth_m()
    k = frame.intrinsics

    def pt(u, v):
        u = np.clip(u, 0, w - 1)
        v = np.clip(v, 0, h - 1)
        z = d[v, u]
        return np.stack([(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z], axis=1), z > 0

    u, v = uv[:, 0], uv[:, 1]
    pr, okr = pt(u + step, v)
    pl, okl = pt(u - step, v)
    pd, okd = pt(u, v + step)
    pu, oku = pt(u, v - step)
    n = np.cross(pr - pl, pd - pu)
    norm = np.linalg.norm(n, axis=1)
    ok = okr & okl & okd & oku & (norm > 0)
    out = np.full((len(uv), 3), np.nan)
    out[ok] = n[ok] / norm[ok, None]
    # orient toward the camera (viewing direction is +z)
    flip = ok & (out[:, 2] > 0)
    out[flip] *= -1
    return out


def classify_scene(frame: RgbdFrame, db: ClassDb, params: Optional[ExtractionParams] = None,
                   with_normals: bool = True) -> ClassifiedCloud:
    """Extract color pairs inside the mask, lift centerline pixels, and label them."""
    if not frame.mask.any():
        raise EmptyMask("frame mask is empty")
    if not np.any(frame.mask & (frame.depth > 0)):
        raise NoValidDepth("no masked pixel has valid depth")
    params = params or ExtractionParams(lightness_weight=db.lightness_weight)
    ex = extract_color_pairs(frame.rgb, frame.mask, params)
    if len(ex.pairs) == 0:
        return ClassifiedCloud.empty()
    uv = ex.pairs.pixel.astype(np.int64)
    pts, ok = frame.lift_pixels(uv)
    ids, w = classify_pairs(ex.pairs, db)
    normals = None
    if with_normals:
        normals = depth_normals(frame, uv[ok])
        good = np.all(np.isfinite(normals), axis=1)
        sel = np.flatnonzero(ok)[good]
        return ClassifiedCloud(pts[sel], ids[sel], w[sel], normals[good])
    return ClassifiedCloud(pts[ok], ids[ok], w[ok])
