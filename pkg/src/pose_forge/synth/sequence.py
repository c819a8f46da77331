"""Smooth randomized rigid trajectories rendered into RGB-D sequences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..core import CameraIntrinsics, RgbdFrame, Se3Pose, random_rotation, rotvec_to_matrix
from ..errors import DataError
from .model import viewing_distance
from .render import Light, default_intrinsics, render_rgbd
from .shapes import TexturedMesh


@dataclass(frozen=True, eq=False)
class MotionScript:
    poses: tuple[Se3Pose, ...]
    intrinsics: CameraIntrinsics
    frame_rate: float = 30.0

    def __post_init__(self) -> None:
        poses = tuple(self.poses)
        if len(poses) < 1:
            raise DataError("a motion script needs at least one pose")
        for p in poses:
            if not (np.all(np.isfinite(p.rotation)) and np.all(np.isfinite(p.translation))):
                raise DataError("non-finite pose in motion script")
        object.__setattr__(self, "poses", poses)

    def __len__(self) -> int:
        return len(self.poses)

    def subsample(self, stride: int) -> "MotionScript":
        return MotionScript(self.poses[::stride], self.intrinsics, self.frame_rate / stride)

    def relative(self, i: int, j: int) -> Se3Pose:
        """Camera-frame motion taking frame ``i`` object points to frame ``j``."""
        return self.poses[j] @ self.poses[i].inverse()


@dataclass(frozen=True)
class SequenceParams:
    n_frames: int = 60
    max_deg_per_frame: float = 2.0
    max_mm_per_frame: float = 4.0
    image_fill: float = 0.5  # object diameter as a fraction of the short image side
    center_jitter: float = 0.01  # meters, initial lateral offset
    period: float = 60.0  # frames per oscillation of the translational motion
    depth_noise_mm: float = 0.0
    dropout: float = 0.0
    frame_rate: float = 30.0
    light: Light = field(default_factory=Light)

    def __post_init__(self) -> None:
        if self.n_frames < 1:
            raise DataError("n_frames must be >= 1")
        if self.max_deg_per_frame < 0 or self.max_mm_per_frame < 0:
            raise DataError("velocity bounds must be non-negative")


def scripted_poses(mesh: TexturedMesh, k: CameraIntrinsics, params: SequenceParams,
                   rng: np.random.Generator) -> list[Se3Pose]:
    """Rotation about the object center with a slowly turning axis; sinusoidal translation.

    Per-frame rotation angles lie in [0.5, 1] x max_deg_per_frame and per-frame
    translation steps are at most max_mm_per_frame.
    """
    dist = viewing_distance(mesh, k, params.image_fill)
    r = random_rotation(rng)
    c = np.array([*rng.uniform(-params.center_jitter, params.center_jitter, 2), dist])
    a = rng.normal(size=3)
    a /= np.linalg.norm(a)
    b = np.cross(a, rng.normal(size=3))
    b /= np.linalg.norm(b)
    turn = rng.uniform(0.02, 0.06)  # radians of axis drift per frame
    speed_phase = rng.uniform(0, 2 * np.pi)
    phase = rng.uniform(0, 2 * np.pi, 3)
    # per-axis amplitude so that the step norm never exceeds the bound
    amp = params.max_mm_per_frame * 1e-3 / np.sqrt(3.0) * params.period / (2 * np.pi)
    poses = []
    for i in range(params.n_frames):
        offset = amp * (np.cos(phase) - np.cos(2 * np.pi * i / params.period + phase))
        poses.append(Se3Pose(r, c + offset))
        axis = np.cos(turn * i) * a + np.sin(turn * i) * b
        deg = params.max_deg_per_frame * (0.75 + 0.25 * np.sin(0.1 * i + speed_phase))
        r = rotvec_to_matrix(np.deg2rad(deg) * axis) @ r
    return poses


def generate_sequence(mesh: TexturedMesh, params: Optional[SequenceParams] = None, seed: int = 0,
                      k: Optional[CameraIntrinsics] = None) -> tuple[list[RgbdFrame], MotionScript]:
    params = params or SequenceParams()
    k = k or default_intrinsics()
    rng = np.random.default_rng(seed)
    poses = scripted_poses(mesh, k, params, rng)
    noise_rng = np.random.default_rng([seed, 1])
    frames = [render_rgbd(mesh, p, k, params.light, params.depth_noise_mm, params.dropout, noise_rng)
              for p in poses]
    return frames, MotionScript(tuple(poses), k, params.frame_rate)
