"""Perspective normalization into a look-at canonical frame."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from ..core import PointCloud, _frozen
from ..errors import DataError, DegenerateUpVector

DEFAULT_UP = (0.0, -1.0, 0.0)


@dataclass(frozen=True, eq=False)
class CanonicalFrame:
    r_p: NDArray[np.float64]  # columns x', y', z'
    t_est: NDArray[np.float64]
    up: NDArray[np.float64]

    def __post_init__(self) -> None:
        object.__setattr__(self, "r_p", _frozen(np.asarray(self.r_p, dtype=np.float64)))
        object.__setattr__(self, "t_est", _frozen(np.asarray(self.t_est, dtype=np.float64)))
        object.__setattr__(self, "up", _frozen(np.asarray(self.up, dtype=np.float64)))

    @property
    def depth(self) -> float:
        return float(np.linalg.norm(self.t_est))

    def to_canonical(self, points: NDArray) -> NDArray[np.float64]:
        return (np.asarray(points, dtype=np.float64) - self.t_est) @ self.r_p

    def to_camera(self, points: NDArray) -> NDArray[np.float64]:
        return np.asarray(points, dtype=np.float64) @ self.r_p.T + self.t_est


def look_at_basis(t_est: NDArray, up: NDArray = DEFAULT_UP) -> NDArray[np.float64]:
    """R_p with columns z' = t/|t|, x' = u x z' / |u x z'|, y' = z' x x'."""
    t = np.asarray(t_est, dtype=np.float64)
    u = np.asarray(up, dtype=np.float64)
    tn = np.linalg.norm(t)
    if not tn > 0:
        raise DataError("t_est must be nonzero")
    z = t / tn
    x = np.cross(u, z)
    xn = np.linalg.norm(x)
    if xn <= 1e-12 * max(np.linalg.norm(u), 1.0):
        raise DegenerateUpVector("up vector is parallel to t_est")
    x /= xn
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def canonical_frame(t_est: NDArray, up: NDArray = DEFAULT_UP) -> CanonicalFrame:
    return CanonicalFrame(look_at_basis(t_est, up), np.asarray(t_est, float), np.asarray(up, float))


def perspective_normalize(cloud: PointCloud, t_est: NDArray,
                          up: NDArray = DEFAULT_UP) -> tuple[PointCloud, CanonicalFrame]:
    """P' = R_p^T (P - t_est); normals are rotated alongside."""
    frame = canonical_frame(t_est, up)
    normals = None if cloud.normals is None else cloud.normals @ frame.r_p
    return PointCloud(frame.to_canonical(cloud.points), normals, cloud.colors), frame
