"""Weighted least-squares rigid alignment."""

from __future__ import annotations

from typing import Optional

import numpy as np
from numpy.typing import NDArray

from ..core import Se3Pose
from ..errors import DataError, DegenerateConfiguration


def kabsch_rotation(src_c: NDArray, dst_c: NDArray, w: NDArray) -> NDArray[np.float64]:
    """Rotation maximizing sum w * dst . (R src) for already-centered inputs."""
    h = (src_c * w[:, None]).T @ dst_c
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    d = 1.0 if d == 0 else d
    return vt.T @ np.diag([1.0, 1.0, d]) @ u.T


def kabsch(src: NDArray, dst: NDArray, weights: Optional[NDArray] = None,
           rank_tol: float = 1e-9) -> Se3Pose:
    """Pose T minimizing sum_i w_i |T(src_i) - dst_i|^2 with det(R) = +1."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    if len(src) != len(dst):
        raise DataError("src and dst must have equal length")
    w = np.ones(len(src)) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if len(w) != len(src):
        raise DataError("weights length does not match points")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise DataError("weights must be finite and non-negative")
    live = w > 0
    if live.sum() < 3 or w.sum() <= 0:
        raise DegenerateConfiguration("kabsch needs at least 3 positively weighted points")
    wn = w / w.sum()
    mu_s = wn @ src
    mu_d = wn @ dst
    s_c = src - mu_s
    d_c = dst - mu_d
    # collinear (rank < 2) sources leave the rotation about their line undetermined
    sv = np.linalg.svd(s_c[live] * np.sqrt(wn[live])[:, None], compute_uv=False)
    if sv[0] <= 0 or sv[1] <= rank_tol * max(sv[0], 1.0):
        raise DegenerateConfiguration("source points are collinear or coincident")
    r = kabsch_rotation(s_c, d_c, wn)
    return Se3Pose(r, mu_d - r @ mu_s)


def weighted_sq_residual(pose: Se3Pose, src: NDArray, dst: NDArray, weights: Optional[NDArray] = None) -> float:
    src = np.asarray(src, dtype=np.float64).reshape(-1, 3)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 3)
    w = np.ones(len(src)) if weights is None else np.asarray(weights, dtype=np.float64)
    return float(np.sum(w * np.sum((pose.apply(src) - dst) ** 2, axis=1)))


def kabsch_batch(src: NDArray, dst: NDArray) -> tuple[NDArray, NDArray, NDArray[np.bool_]]:
    """Unweighted Kabsch for B stacked problems (B, n, 3); returns R, t and a validity mask."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    mu_s = src.mean(axis=1, keepdims=True)
    mu_d = dst.mean(axis=1, keepdims=True)
    s_c = src - mu_s
    d_c = dst - mu_d
    h = np.einsum("bni,bnj->bij", s_c, d_c)
    u, _, vt = np.linalg.svd(h)
    det = np.linalg.det(np.einsum("bji,bkj->bik", vt, u))
    dm = np.ones((len(src), 3))
    dm[:, 2] = np.where(det < 0, -1.0, 1.0)
    r = np.einsum("bji,bj,bkj->bik", vt, dm, u)
    t = mu_d[:, 0] - np.einsum("bij,bj->bi", r, mu_s[:, 0])
    sv = np.linalg.svd(s_c, compute_uv=False)
    valid = sv[:, 1] > 1e-9 * np.maximum(sv[:, 0], 1.0)
    return r, t, valid
