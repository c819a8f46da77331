"""Procedural stream of paired noisy point clouds with ground-truth relative motion."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from ..core import CameraIntrinsics, PointCloud, Se3Pose, project, random_rotation, rotvec_to_matrix
from ..synth.model import viewing_distance
from ..synth.render import Light, default_intrinsics, render_rgbd
from ..synth.shapes import ShapeParams, generate_shape


@dataclass(frozen=True)
class TrainingPairParams:
    max_rot_deg: float = 15.0
    max_trans: float = 0.02  # meters
    depth_noise_mm: float = 1.0
    dropout: float = 0.02
    max_points: int = 1024
    depth_tolerance_mm: float = 5.0  # visibility check in the second view
    image_fill: float = 0.5
    shape: ShapeParams = field(default_factory=ShapeParams)
    light: Light = field(default_factory=Light)


def _sample_motion(rng: np.random.Generator, params: TrainingPairParams) -> tuple[np.ndarray, np.ndarray]:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(params.max_rot_deg) * rng.uniform(0, 1)
    d = rng.normal(size=3)
    d *= params.max_trans * rng.uniform(0, 1) / np.linalg.norm(d)
    rot = np.eye(3) if params.max_rot_deg == 0 else rotvec_to_matrix(angle * axis)
    return rot, d


def make_training_pair(seed: int, index: int, params: Optional[TrainingPairParams] = None,
                       k: Optional[CameraIntrinsics] = None) -> tuple[PointCloud, PointCloud, Se3Pose]:
    """Item ``index`` of the stream for ``seed``; see :func:`procedural_training_pairs`."""
    params = params or TrainingPairParams()
    k = k or default_intrinsics()
    rng = np.random.default_rng([seed, index])
    mesh = generate_shape(int(rng.integers(2**31)), params.shape)
    dist = viewing_distance(mesh, k, params.image_fill)
    r1 = random_rotation(rng)
    t1 = np.array([*rng.uniform(-0.01, 0.01, 2), dist])
    d_rot, d_trans = _sample_motion(rng, params)
    pose1 = Se3Pose(r1, t1)
    pose2 = Se3Pose(d_rot @ r1, t1 + d_trans)
    # object rotates about its own origin, so in the camera frame x2 = dR x1 + (t2 - dR t1)
    rel = Se3Pose(d_rot, pose2.translation - d_rot @ t1)
    f1 = render_rgbd(mesh, pose1, k, params.light, params.depth_noise_mm, params.dropout, rng)
    f2 = render_rgbd(mesh, pose2, k, params.light, params.depth_noise_mm, params.dropout, rng)

    vs, us = np.nonzero(f1.depth > 0)
    p1, _ = f1.lift_pixels(np.stack([us, vs], axis=1))
    uv2 = project(rel.apply(p1), k)
    p2, ok = f2.lift_pixels(uv2)
    z_pred = rel.apply(p1)[:, 2]
    ok &= np.abs(p2[:, 2] - z_pred) * 1000.0 <= params.depth_tolerance_mm
    idx = np.flatnonzero(ok)
    if len(idx) > params.max_points:
        idx = np.sort(rng.choice(idx, params.max_points, replace=False))
    return PointCloud(p1[idx]), PointCloud(p2[idx]), rel


def procedural_training_pairs(seed: int, params: Optional[TrainingPairParams] = None,
                              k: Optional[CameraIntrinsics] = None) -> Iterator[tuple[PointCloud, PointCloud, Se3Pose]]:
    """Endless deterministic stream of (cloud 1, cloud 2, relative motion 1 -> 2).

    Each item renders a fresh procedural shape from two poses that differ by a
    rotation about the object center (at most ``max_rot_deg``) and a
    translation (at most ``max_trans``), with depth noise and dropout, and
    pairs pixels visible in both views.
    """
    i = 0
    while True:
        yield make_training_pair(seed, i, params, k)
        i += 1
