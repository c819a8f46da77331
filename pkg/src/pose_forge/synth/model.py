"""Reference model clouds from offline rendered views."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from ..colorpair import ClassDb, ExtractionParams, PairArray, build_class_db, classify_pairs
from ..colorpair import extract_color_pairs
from ..core import CameraIntrinsics, PointCloud, Se3Pose, normalize_rows
from ..registration.cloud import ClassifiedCloud
from .render import Light, default_intrinsics, render_rgbd
from .shapes import TexturedMesh


@dataclass(frozen=True)
class ModelParams:
    similarity_threshold: float = 0.85
    merge_threshold: Optional[float] = 0.97
    classify_threshold: float = 0.7
    min_class_fraction: float = 0.004  # of all reference pairs
    lightness_weight: float = 0.3
    voxel: float = 0.002
    image_fill: float = 0.55  # diameter as a fraction of the shorter image side
    extraction: ExtractionParams = field(default_factory=ExtractionParams)


def icosahedron_directions() -> NDArray[np.float64]:
    g = (1.0 + 5 ** 0.5) / 2
    v = []
    for a in (-1.0, 1.0):
        for b in (-g, g):
            v += [(0.0, a, b), (a, b, 0.0), (b, 0.0, a)]
    return normalize_rows(np.array(v))


def sphere_directions(n: int) -> NDArray[np.float64]:
    if n == 12:
        return icosahedron_directions()
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(np.maximum(1 - z * z, 0))
    phi = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def look_at_pose(direction: NDArray, distance: float) -> Se3Pose:
    """Object-to-camera pose for a camera at ``distance * direction`` aimed at the origin."""
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    z = -d
    up = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return Se3Pose(np.stack([x, y, z]), np.array([0.0, 0.0, distance]))


def viewing_distance(mesh: TexturedMesh, k: CameraIntrinsics, fill: float) -> float:
    return k.fx * mesh.diameter / (fill * min(k.width, k.height))


def surface_cloud(mesh: TexturedMesh) -> PointCloud:
    """Mesh vertices with area-weighted vertex normals (dense ICP target)."""
    return PointCloud(mesh.vertices, mesh.vertex_normals())


def _voxel_merge(points, ids, weights, voxel):
    keys = np.floor(points / voxel).astype(np.int64)
    rows = np.concatenate([keys, ids[:, None]], axis=1)
    uniq, inv = np.unique(rows, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    cnt = np.bincount(inv, minlength=len(uniq)).astype(np.float64)
    merged = np.stack([np.bincount(inv, points[:, c], len(uniq)) for c in range(3)], axis=1)
    merged /= cnt[:, None]
    w = np.zeros(len(uniq))
    np.maximum.at(w, inv, weights)
    return merged, uniq[:, 3], w


def build_model_cloud(mesh: TexturedMesh, view_count: int = 12,
                      k: Optional[CameraIntrinsics] = None, light: Optional[Light] = None,
                      params: Optional[ModelParams] = None) -> tuple[ClassifiedCloud, ClassDb]:
    """Render views around the mesh, build the class db and back-project edge points."""
    if view_count < 1:
        raise ValueError("view_count must be >= 1")
    params = params or ModelParams()
    k = k or default_intrinsics()
    dist = viewing_distance(mesh, k, params.image_fill)
    per_view = []
    for d in sphere_directions(view_count):
        pose = look_at_pose(d, dist)
        frame = render_rgbd(mesh, pose, k, light)
        ex = extract_color_pairs(frame.rgb, frame.mask, params.extraction)
        pts, ok = frame.lift_pixels(ex.pairs.pixel)
        per_view.append((ex.pairs[ok], pose.inverse().apply(pts[ok])))
    pairs = PairArray.concat([p for p, _ in per_view])
    points = np.concatenate([x for _, x in per_view]) if per_view else np.zeros((0, 3))
    min_members = max(1, int(round(params.min_class_fraction * len(pairs))))
    db = build_class_db(pairs, params.similarity_threshold, params.lightness_weight,
                        min_members=min_members, merge_threshold=params.merge_threshold,
                        classify_threshold=params.classify_threshold)
    ids, w = classify_pairs(pairs, db)
    merged, mids, mw = _voxel_merge(points, ids, w, params.voxel)
    vn = mesh.vertex_normals()
    _, nearest = cKDTree(mesh.vertices).query(merged)
    cloud = ClassifiedCloud(merged, mids, np.where(mids >= 0, mw, 0.0), vn[nearest])
    return cloud, db
