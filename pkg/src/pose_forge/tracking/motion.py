"""15-D motion features and robust relative rotation / translation estimators."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

from ..core import CameraIntrinsics, PointCloud
from ..errors import DataError, DegenerateConfiguration, LengthMismatch
from ..registration.kabsch import kabsch_rotation
from .canonical import CanonicalFrame

# column blocks of a motion feature row
P1 = slice(0, 3)
P2 = slice(3, 6)
UV1 = slice(6, 8)
UV2 = slice(8, 10)
FLOW3 = slice(10, 13)
FLOW2 = slice(13, 15)
FEATURE_DIM = 15


@dataclass(frozen=True, eq=False)
class MotionFeatures:
    """(N, 15) rows: p1, p2 (canonical, meters), uv1, uv2 (normalized virtual-camera
    coordinates), 3-D flow p2 - p1, 2-D flow uv2 - uv1."""

    data: NDArray[np.float64]

    def __len__(self) -> int:
        return len(self.data)

    def block(self, name: str) -> NDArray[np.float64]:
        return self.data[:, {"p1": P1, "p2": P2, "uv1": UV1, "uv2": UV2,
                             "flow3": FLOW3, "flow2": FLOW2}[name]]


def virtual_projection(points: NDArray, depth: float) -> NDArray[np.float64]:
    """Normalized coordinates of canonical points seen by a centered camera ``depth`` away.

    The canonical frame puts the object centroid on the optical axis at the
    origin; the virtual camera sits at -depth along z', so pixel coordinates
    with focal fx and a centered principal point are fx times these values.
    """
    p = np.asarray(points, dtype=np.float64)
    z = p[:, 2] + depth
    if np.any(z <= 0):
        raise DataError("canonical point behind the virtual camera")
    return p[:, :2] / z[:, None]


def build_motion_features(p1: PointCloud, p2: PointCloud, k: Optional[CameraIntrinsics] = None,
                          depth: Optional[float] = None, frame: Optional[CanonicalFrame] = None) -> MotionFeatures:
    """Concatenate the five blocks for paired canonicalized clouds.

    The virtual camera distance is ``frame.depth`` (or ``depth``); ``k`` is
    accepted for interface parity since normalized coordinates do not depend on it.
    """
    a, b = p1.points, p2.points
    if len(a) != len(b):
        raise LengthMismatch("feature clouds must pair up")
    d = depth if depth is not None else (frame.depth if frame is not None else 1.0)
    uv1 = virtual_projection(a, d)
    uv2 = virtual_projection(b, d)
    data = np.concatenate([a, b, uv1, uv2, b - a, uv2 - uv1], axis=1)
    return MotionFeatures(data)


def mad_weights(r: NDArray, live: NDArray, k: float = 3.0) -> NDArray[np.float64]:
    """Cauchy-type down-weighting 1 / (1 + (r / s)^2) with s = median + k * 1.4826 * MAD."""
    rl = r[live]
    med = np.median(rl)
    mad = np.median(np.abs(rl - med))
    scale = med + k * 1.4826 * mad + 1e-9
    return np.where(live, 1.0 / (1.0 + (r / scale) ** 2), 0.0)


def _weighted_center(p: NDArray, w: NDArray) -> NDArray:
    return (w[:, None] * p).sum(axis=0) / w.sum()


def robust_rotation(p1: NDArray, p2: NDArray, weights: Optional[NDArray] = None,
                    rounds: int = 2) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Rotation R with p2 - c2 ~ R (p1 - c1), plus the final per-pair weights.

    Initial weights come from the rotation-invariant residual | |p1 - m1| - |p2 - m2| |
    (m = coordinate-wise medians); each of ``rounds`` then re-weights by the
    residual of a weighted, weight-centered Kabsch fit. Weights are soft, so
    outliers are down-weighted rather than discarded.
    """
    a = np.asarray(p1, dtype=np.float64)
    b = np.asarray(p2, dtype=np.float64)
    if len(a) != len(b):
        raise LengthMismatch("rotation estimate needs paired clouds")
    w0 = np.ones(len(a)) if weights is None else np.asarray(weights, dtype=np.float64)
    live = w0 > 0
    if live.sum() < 3:
        raise DegenerateConfiguration("need at least 3 weighted correspondences")
    radial = np.abs(np.linalg.norm(a - np.median(a[live], axis=0), axis=1) -
                    np.linalg.norm(b - np.median(b[live], axis=0), axis=1))
    w = w0 * mad_weights(radial, live)
    r = np.eye(3)
    for i in range(rounds + 1):
        ca, cb = _weighted_center(a, w), _weighted_center(b, w)
        ac, bc = a - ca, b - cb
        sv = np.linalg.svd(ac[live] * np.sqrt(w[live])[:, None], compute_uv=False)
        if sv[1] <= 1e-9 * max(sv[0], 1e-300):
            raise DegenerateConfiguration("correspondences are collinear")
        r = kabsch_rotation(ac, bc, w)
        if i < rounds:
            w = w0 * mad_weights(np.linalg.norm(bc - ac @ r.T, axis=1), live)
    return r, w


def estimate_relative_rotation(p1: PointCloud, p2: PointCloud, weights: Optional[NDArray] = None,
                               rounds: int = 2) -> NDArray[np.float64]:
    """Robust rotation between paired canonicalized clouds; see :func:`robust_rotation`."""
    a = p1.points if isinstance(p1, PointCloud) else p1
    b = p2.points if isinstance(p2, PointCloud) else p2
    return robust_rotation(a, b, weights, rounds)[0]


def camera_relative_rotation(r_can: NDArray, f1: CanonicalFrame, f2: CanonicalFrame) -> NDArray[np.float64]:
    """Camera-frame rotation from a canonical estimate: R_p2 R_can R_p1^T."""
    return f2.r_p @ np.asarray(r_can, dtype=np.float64) @ f1.r_p.T


def weighted_median(x: NDArray, w: NDArray) -> float:
    order = np.argsort(x, kind="stable")
    xs, ws = x[order], w[order]
    c = np.cumsum(ws)
    half = 0.5 * c[-1]
    i = int(np.searchsorted(c, half))
    if np.isclose(c[i], half) and i + 1 < len(xs):
        return float(0.5 * (xs[i] + xs[i + 1]))
    return float(xs[i])


def estimate_relative_translation(rotation: NDArray, p1_cam: NDArray, p2_cam: NDArray,
                                  weights: Optional[NDArray] = None) -> NDArray[np.float64]:
    """Coordinate-wise weighted median of p2 - R p1 (camera frame)."""
    a = np.asarray(p1_cam.points if isinstance(p1_cam, PointCloud) else p1_cam, dtype=np.float64)
    b = np.asarray(p2_cam.points if isinstance(p2_cam, PointCloud) else p2_cam, dtype=np.float64)
    if len(a) != len(b):
        raise LengthMismatch("translation estimate needs paired clouds")
    if len(a) == 0:
        raise DegenerateConfiguration("no correspondences")
    w = np.ones(len(a)) if weights is None else np.asarray(weights, dtype=np.float64)
    d = b - a @ np.asarray(rotation, dtype=np.float64).T
    return np.array([weighted_median(d[:, i], w) for i in range(3)])


RotationEstimator = Callable[[PointCloud, PointCloud, Optional[NDArray]], NDArray]
