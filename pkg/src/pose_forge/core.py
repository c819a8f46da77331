"""Geometry and image primitives: rigid transforms, pinhole camera, frames, clouds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.transform import Rotation

from .errors import DataError, NonPositiveDepth

Array = NDArray[np.float64]

_ORTHO_TOL = 1e-6


def _frozen(a: NDArray) -> NDArray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Se3Pose:
    """Rigid transform x -> R x + t (meters)."""

    rotation: Array
    translation: Array

    def __post_init__(self) -> None:
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise DataError("pose contains non-finite values")
        if np.abs(r.T @ r - np.eye(3)).max() > _ORTHO_TOL or np.linalg.det(r) < 0:
            raise DataError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "Se3Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m: NDArray) -> "Se3Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise DataError(f"expected 4x4 matrix, got {m.shape}")
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_rotvec(cls, rotvec: NDArray, translation: NDArray = (0.0, 0.0, 0.0)) -> "Se3Pose":
        return cls(rotvec_to_matrix(rotvec), np.asarray(translation, dtype=np.float64))

    def matrix(self) -> Array:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Se3Pose":
        rt = self.rotation.T
        return Se3Pose(rt, -rt @ self.translation)

    def compose(self, other: "Se3Pose") -> "Se3Pose":
        """``self ∘ other``: applies ``other`` first."""
        return Se3Pose(self.rotation @ other.rotation,
                       self.rotation @ other.translation + self.translation)

    __matmul__ = compose

    def apply(self, points: NDArray) -> Array:
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def rotvec(self) -> Array:
        return matrix_to_rotvec(self.rotation)

    def orthonormalized(self) -> "Se3Pose":
        return Se3Pose(project_to_so3(self.rotation), self.translation)

    def __repr__(self) -> str:
        rv = np.degrees(self.rotvec())
        return f"Se3Pose(rotvec_deg={np.round(rv, 4).tolist()}, t={np.round(self.translation, 6).tolist()})"


def se3_compose(a: Se3Pose, b: Se3Pose) -> Se3Pose:
    return a.compose(b)


def rotvec_to_matrix(rotvec: NDArray) -> Array:
    return Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)).as_matrix()


def matrix_to_rotvec(r: NDArray) -> Array:
    return Rotation.from_matrix(np.asarray(r, dtype=np.float64)).as_rotvec()


def project_to_so3(m: NDArray) -> Array:
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def rotation_angle(a: NDArray, b: NDArray) -> float:
    """Geodesic angle (radians) between two rotation matrices."""
    c = (np.trace(np.asarray(a).T @ np.asarray(b)) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def rot_z(deg: float) -> Array:
    return rotvec_to_matrix([0.0, 0.0, np.radians(deg)])


def random_rotation(rng: np.random.Generator) -> Array:
    """Uniform rotation (Shoemake quaternion sampling)."""
    u1, u2, u3 = rng.random(3)
    q = np.array([
        np.sqrt(1 - u1) * np.sin(2 * np.pi * u2),
        np.sqrt(1 - u1) * np.cos(2 * np.pi * u2),
        np.sqrt(u1) * np.sin(2 * np.pi * u3),
        np.sqrt(u1) * np.cos(2 * np.pi * u3),
    ])
    return Rotation.from_quat(q).as_matrix()


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise DataError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise DataError("principal point outside the image")

    def matrix(self) -> Array:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def to_dict(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                   int(d["width"]), int(d["height"]))


def project(p: NDArray, k: CameraIntrinsics) -> Array:
    """Pinhole projection of one point (3,) or many (N, 3) to pixels."""
    p = np.asarray(p, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= 0):
        raise NonPositiveDepth("cannot project a point with z <= 0")
    u = k.fx * p[..., 0] / z + k.cx
    v = k.fy * p[..., 1] / z + k.cy
    return np.stack([u, v], axis=-1)


def lift(u, v, d, k: CameraIntrinsics) -> Array:
    """Back-project pixel(s) at depth ``d`` (meters) to camera coordinates."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise NonPositiveDepth("cannot lift a pixel with depth <= 0")
    x = (u - k.cx) * d / k.fx
    y = (v - k.cy) * d / k.fy
    return np.stack([x, y, d + 0.0 * x], axis=-1)


@dataclass(frozen=True, eq=False)
class RgbdFrame:
    """Color + depth (uint16 millimeters, 0 = invalid) + object mask."""

    rgb: NDArray[np.uint8]
    depth: NDArray[np.uint16]
    mask: NDArray[np.bool_]
    intrinsics: CameraIntrinsics

    def __post_init__(self) -> None:
        rgb = np.asarray(self.rgb, dtype=np.uint8)
        depth = np.asarray(self.depth, dtype=np.uint16)
        mask = np.asarray(self.mask).astype(bool)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise DataError("rgb must be HxWx3")
        if depth.shape != rgb.shape[:2] or mask.shape != rgb.shape[:2]:
            raise DataError("rgb, depth and mask must share dimensions")
        k = self.intrinsics
        if (k.height, k.width) != rgb.shape[:2]:
            raise DataError("intrinsics image size does not match frame")
        object.__setattr__(self, "rgb", _frozen(rgb))
        object.__setattr__(self, "depth", _frozen(depth))
        object.__setattr__(self, "mask", _frozen(mask))

    @property
    def shape(self) -> tuple[int, int]:
        return self.rgb.shape[:2]

    def depth_m(self) -> Array:
        return self.depth.astype(np.float64) / 1000.0

    def lift_pixels(self, uv: NDArray) -> tuple[Array, NDArray[np.bool_]]:
        """Lift integer pixel coords (N, 2) as (u, v); returns points and a validity flag."""
        uv = np.asarray(uv).reshape(-1, 2)
        ui = np.rint(uv[:, 0]).astype(int)
        vi = np.rint(uv[:, 1]).astype(int)
        h, w = self.shape
        inside = (ui >= 0) & (ui < w) & (vi >= 0) & (vi < h)
        d = np.zeros(len(uv))
        d[inside] = self.depth[vi[inside], ui[inside]] / 1000.0
        ok = d > 0
        pts = np.zeros((len(uv), 3))
        if ok.any():
            pts[ok] = lift(uv[ok, 0], uv[ok, 1], d[ok], self.intrinsics)
        return pts, ok

    def lift_subpixel(self, uv: NDArray, max_step_mm: float = 10.0) -> tuple[Array, NDArray[np.bool_]]:
        """Lift fractional (u, v) with bilinear depth.

        Falls back to the nearest pixel where any of the four neighbours lacks
        depth or they straddle a discontinuity larger than ``max_step_mm``.
        """
        uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
        pts, ok = self.lift_pixels(uv)
        h, w = self.shape
        u0 = np.floor(uv[:, 0]).astype(int)
        v0 = np.floor(uv[:, 1]).astype(int)
        inner = ok & (u0 >= 0) & (v0 >= 0) & (u0 + 1 < w) & (v0 + 1 < h)
        if not inner.any():
            return pts, ok
        i = np.flatnonzero(inner)
        a, b = u0[i], v0[i]
        quad = np.stack([self.depth[b, a], self.depth[b, a + 1], self.depth[b + 1, a],
                         self.depth[b + 1, a + 1]], axis=1).astype(np.float64)
        good = (quad.min(axis=1) > 0) & (np.ptp(quad, axis=1) <= max_step_mm)
        i, quad = i[good], quad[good]
        fu = uv[i, 0] - u0[i]
        fv = uv[i, 1] - v0[i]
        d = ((1 - fu) * (1 - fv) * quad[:, 0] + fu * (1 - fv) * quad[:, 1] +
             (1 - fu) * fv * quad[:, 2] + fu * fv * quad[:, 3]) / 1000.0
        pts[i] = lift(uv[i, 0], uv[i, 1], d, self.intrinsics)
        return pts, ok

    def masked_points(self, mask: Optional[NDArray] = None) -> Array:
        m = self.mask if mask is None else np.asarray(mask, dtype=bool)
        vs, us = np.nonzero(m & (self.depth > 0))
        if len(us) == 0:
            return np.zeros((0, 3))
        return lift(us, vs, self.depth[vs, us] / 1000.0, self.intrinsics)


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: Array
    normals: Optional[Array] = None
    colors: Optional[Array] = None

    def __post_init__(self) -> None:
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", _frozen(p))
        for name in ("normals", "colors"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=np.float64).reshape(-1, 3)
                if len(val) != len(p):
                    raise DataError(f"{name} length does not match points")
                if name == "normals":
                    n = np.linalg.norm(val, axis=1)
                    if len(n) and np.abs(n - 1.0).max() > 1e-6:
                        raise DataError("normals must be unit length")
                object.__setattr__(self, name, _frozen(val))

    def __len__(self) -> int:
        return len(self.points)

    def transformed(self, pose: Se3Pose) -> "PointCloud":
        normals = None if self.normals is None else self.normals @ pose.rotation.T
        return PointCloud(pose.apply(self.points), normals, self.colors)


def normalize_rows(v: NDArray, eps: float = 1e-12) -> Array:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(n, eps)

