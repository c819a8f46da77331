"""Pose refinement: multi-class joint ICP and fixed-iteration point-to-plane ICP."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .core import PointCloud, Se3Pose, rotation_angle, rotvec_to_matrix
from .errors import DataError, DivergenceDetected, NoCorrespondences
from .registration.cloud import ClassifiedCloud
from .registration.kabsch import kabsch

AGGREGATE = -1  # class label used for pcd0 pairs in reports


@dataclass(frozen=True)
class IcpParams:
    pyramid_levels: int = 3
    subsample: tuple[float, ...] = (0.25, 0.5, 1.0)
    correspondence_radius: tuple[float, ...] = (0.03, 0.015, 0.008)
    max_iters_per_level: int = 20
    robust_kernel_scale: float = 0.005
    aggregate_weight: float = 0.5
    convergence_eps: tuple[float, float] = (1e-5, 1e-6)  # radians, meters
    divergence_patience: int = 3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.pyramid_levels < 1:
            raise DataError("pyramid_levels must be >= 1")
        if len(self.subsample) != self.pyramid_levels or len(self.correspondence_radius) != self.pyramid_levels:
            raise DataError("subsample and correspondence_radius need one entry per level")
        if any(r <= 0 for r in self.correspondence_radius) or any(not (0 < f <= 1) for f in self.subsample):
            raise DataError("radii must be positive and subsample fractions in (0, 1]")
        if any(b >= a for a, b in zip(self.correspondence_radius, self.correspondence_radius[1:])):
            raise DataError("correspondence radii must decrease with level")
        if self.max_iters_per_level < 1 or self.robust_kernel_scale <= 0 or self.aggregate_weight < 0:
            raise DataError("invalid ICP budget, kernel scale or aggregate weight")


@dataclass(frozen=True, eq=False)
class IcpReport:
    pose: Se3Pose
    iterations: int
    inliers: dict[int, int]  # class id (or -1 for pcd0) -> pairs in the last iteration
    rms: float
    converged: bool
    updates: int = 0
    history: list[tuple[float, float]] = field(default_factory=list)  # (cost before, after) per iteration


def huber_weights(r: NDArray, scale: float) -> NDArray:
    r = np.asarray(r, dtype=np.float64)
    return np.where(r <= scale, 1.0, scale / np.maximum(r, 1e-300))


class _ClassTrees:
    def __init__(self, model: ClassifiedCloud):
        self.model = model
        self.trees: dict[int, tuple[cKDTree, NDArray]] = {}
        for c in model.classes():
            idx = np.flatnonzero(model.class_ids == c)
            self.trees[int(c)] = (cKDTree(model.points[idx]), idx)
        self.aggregate = cKDTree(model.points) if len(model) else None


def _pairs(scene_pts: NDArray, scene_ids: NDArray, scene_w: NDArray, trees: _ClassTrees,
           radius: float, params: IcpParams):
    """Stacked (src, dst, point weight, label) over per-class and aggregate matches."""
    src, dst, pw, lab = [], [], [], []
    model = trees.model
    for c, (tree, idx) in trees.trees.items():
        sel = np.flatnonzero(scene_ids == c)
        if len(sel) == 0:
            continue
        d, j = tree.query(scene_pts[sel], distance_upper_bound=radius)
        ok = np.isfinite(d)
        src.append(scene_pts[sel[ok]])
        dst.append(model.points[idx[j[ok]]])
        pw.append(scene_w[sel[ok]])
        lab.append(np.full(ok.sum(), c))
    if params.aggregate_weight > 0 and trees.aggregate is not None:
        d, j = trees.aggregate.query(scene_pts, distance_upper_bound=radius)
        ok = np.isfinite(d)
        src.append(scene_pts[ok])
        dst.append(model.points[j[ok]])
        # pcd0 is a geometric constraint: unclassified points join with unit weight
        pw.append(np.full(ok.sum(), params.aggregate_weight))
        lab.append(np.full(ok.sum(), AGGREGATE))
    if not src:
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0, np.int64)
    return np.concatenate(src), np.concatenate(dst), np.concatenate(pw), np.concatenate(lab)


def icp_multiclass(scene: ClassifiedCloud, model: ClassifiedCloud, init: Se3Pose,
                   params: Optional[IcpParams] = None) -> IcpReport:
    """Joint class-restricted + aggregate point-to-point ICP; one pose update per iteration.

    Poses map model coordinates to the camera frame. The scene is pulled into
    the model frame each iteration so the model-side k-d trees stay fixed.
    """
    params = params or IcpParams()
    if not np.all(np.isfinite(init.matrix())):
        raise DataError("initial pose must be finite")
    trees = _ClassTrees(model)
    rng = np.random.default_rng(params.seed)
    g = init.inverse()  # camera -> model
    history: list[tuple[float, float]] = []
    iterations = updates = 0
    rms = float("inf")
    inliers: dict[int, int] = {}
    converged = False
    eps_r, eps_t = params.convergence_eps
    for level in range(params.pyramid_levels):
        frac = params.subsample[level]
        n_keep = max(3, int(round(frac * len(scene))))
        if n_keep >= len(scene):
            sel = np.arange(len(scene))
        else:
            sel = np.sort(rng.choice(len(scene), size=n_keep, replace=False))
        pts, ids, w = scene.points[sel], scene.class_ids[sel], scene.weights[sel]
        radius = params.correspondence_radius[level]
        prev_rms = float("inf")
        growth = 0
        converged = False
        for _ in range(params.max_iters_per_level):
            moved = g.apply(pts)
            src, dst, pw, lab = _pairs(moved, ids, w, trees, radius, params)
            r = np.linalg.norm(src - dst, axis=1)
            weight = pw * huber_weights(r, params.robust_kernel_scale)
            if len(src) < 3 or np.count_nonzero(weight > 0) < 3:
                raise NoCorrespondences(f"only {len(src)} ICP correspondences at level {level}")
            cost_before = float(np.sum(weight * r ** 2))
            delta = kabsch(src, dst, weight)
            cost_after = float(np.sum(weight * np.sum((delta.apply(src) - dst) ** 2, axis=1)))
            history.append((cost_before, cost_after))
            g = delta @ g
            updates += 1
            iterations += 1
            rms = float(np.sqrt(cost_after / weight.sum()))
            labels, counts = np.unique(lab, return_counts=True)
            inliers = {int(a): int(b) for a, b in zip(labels, counts)}
            growth = growth + 1 if rms > prev_rms else 0
            if growth >= params.divergence_patience:
                raise DivergenceDetected(f"ICP RMS grew {growth} iterations in a row")
            prev_rms = rms
            if rotation_angle(delta.rotation, np.eye(3)) < eps_r and np.linalg.norm(delta.translation) < eps_t:
                converged = True
                break
    return IcpReport(g.inverse().orthonormalized(), iterations, inliers, rms, converged, updates, history)


# ---- point-to-plane ------------------------------------------------------------------

def point_to_plane_jacobian(points: NDArray, normals: NDArray) -> NDArray[np.float64]:
    """d r / d xi for r = ((exp(xi) p) - m) . n at xi = 0, xi = (omega, v)."""
    return np.concatenate([np.cross(points, normals), normals], axis=1)


def point_to_plane_residuals(xi: NDArray, points: NDArray, targets: NDArray, normals: NDArray) -> NDArray:
    xi = np.asarray(xi, dtype=np.float64)
    moved = points @ rotvec_to_matrix(xi[:3]).T + xi[3:]
    return np.sum((moved - targets) * normals, axis=1)


def point_to_plane_icp(scene: PointCloud, model: PointCloud, init: Se3Pose, fixed_iters: int = 5,
                       max_distance: Optional[float] = None, weights: Optional[NDArray] = None,
                       tree: Optional[cKDTree] = None) -> Se3Pose:
    """Exactly ``fixed_iters`` Gauss-Newton steps on sum w ((T^-1 s - m) . n)^2.

    The update is a left perturbation of the camera-to-model transform and is
    solved in the minimum-norm least-squares sense, so directions the
    correspondences do not constrain are left untouched.
    """
    if model.normals is None:
        raise DataError("point-to-plane ICP needs model normals")
    if fixed_iters < 1:
        raise DataError("fixed_iters must be >= 1")
    tree = tree or cKDTree(model.points)
    w_all = np.ones(len(scene)) if weights is None else np.asarray(weights, dtype=np.float64)
    g = init.inverse()
    bound = np.inf if max_distance is None else max_distance
    for _ in range(fixed_iters):
        moved = g.apply(scene.points)
        d, j = tree.query(moved, distance_upper_bound=bound)
        ok = np.isfinite(d) & (w_all > 0)
        if ok.sum() < 6:
            raise NoCorrespondences(f"only {int(ok.sum())} point-to-plane correspondences")
        p, m, n = moved[ok], model.points[j[ok]], model.normals[j[ok]]
        sw = np.sqrt(w_all[ok])
        r = np.sum((p - m) * n, axis=1)
        jac = point_to_plane_jacobian(p, n)
        xi = np.linalg.lstsq(jac * sw[:, None], -r * sw, rcond=None)[0]
        g = Se3Pose(rotvec_to_matrix(xi[:3]), xi[3:]) @ g
    return g.inverse().orthonormalized()
