"""Frame-to-frame tracking loop: flow, color-pair filter, canonical motion estimate, ICP polish."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import cv2
import numpy as np
from numpy.typing import NDArray
from scipy import ndimage
from scipy.spatial import cKDTree

from ..colorpair import ExtractionParams, edges_in_box, mask_box
from ..core import PointCloud, RgbdFrame, Se3Pose, project_to_so3
from ..errors import AlgorithmFailure, DataError, DegenerateConfiguration, TrackingLost
from ..refine import point_to_plane_icp
from ..registration import ClassifiedCloud
from ..registration.kabsch import kabsch_rotation
from .canonical import DEFAULT_UP, canonical_frame
from .filtering import FilterParams, filter_by_colorpair
from .flow import FlowParams, Matches, edge_seeds, flow_correspondences
from .motion import (MotionFeatures, build_motion_features, camera_relative_rotation,
                     estimate_relative_translation, robust_rotation)

# optional learned estimator: features in the shared frame-1 canonical frame -> rotation there
FeatureEstimator = Callable[[MotionFeatures], NDArray]


@dataclass(frozen=True)
class TrackParams:
    flow: FlowParams = field(default_factory=FlowParams)
    filter: FilterParams = field(default_factory=FilterParams)
    extraction: ExtractionParams = field(default_factory=ExtractionParams)
    use_filter: bool = True
    flow_passes: int = 3  # later passes run LK on the frame warped by the previous pass's motion
    min_matches: int = 12
    search_margin: int = 48  # pixels around the previous mask searched in the new frame
    seed_erosion: int = 3
    icp_iters: int = 5
    icp_max_distance: float = 0.01
    max_scene_points: int = 1500
    mask_dilation: int = 3
    mask_radius_factor: float = 0.6  # keep mask pixels within this x diameter of the pose center
    up: tuple[float, float, float] = DEFAULT_UP
    polish: bool = True
    feature_estimator: Optional[FeatureEstimator] = None


@dataclass(frozen=True, eq=False)
class TrackState:
    pose: Se3Pose
    prev_frame: RgbdFrame
    prev_mask: NDArray[np.bool_]
    model: ClassifiedCloud
    frame_index: int = 0
    surface: Optional[PointCloud] = None  # dense ICP target; falls back to the model cloud
    diameter: float = 0.0
    tree: Optional[cKDTree] = None
    prev_lab: Optional[NDArray] = None
    prev_edges: Optional[object] = None

    def __post_init__(self) -> None:
        if not (np.all(np.isfinite(self.pose.rotation)) and np.all(np.isfinite(self.pose.translation))):
            raise DataError("track pose must be finite")
        mask = np.asarray(self.prev_mask, dtype=bool)
        if mask.shape != self.prev_frame.shape:
            raise DataError("mask does not match the previous frame")
        object.__setattr__(self, "prev_mask", mask)

    @property
    def target(self) -> PointCloud:
        if self.surface is not None:
            return self.surface
        if self.model.normals is None:
            raise DataError("tracking needs a model with normals")
        return PointCloud(self.model.points, self.model.normals)


def init_track(frame: RgbdFrame, pose: Se3Pose, model: ClassifiedCloud,
               surface: Optional[PointCloud] = None, mask: Optional[NDArray] = None) -> TrackState:
    """Start tracking from a registered pose; ``mask`` defaults to the frame's mask."""
    target = surface if surface is not None else PointCloud(model.points, model.normals)
    pts = target.points
    diameter = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0))) if len(pts) else 0.0
    m = frame.mask if mask is None else np.asarray(mask, dtype=bool)
    return TrackState(pose, frame, m, model, 0, surface, diameter, cKDTree(target.points))


@dataclass(frozen=True, eq=False)
class StepDiagnostics:
    matches: Matches
    kept: NDArray[np.bool_]
    predicted: Se3Pose  # composed pose before the ICP polish
    relative: Se3Pose  # estimated camera-frame motion prev -> cur


def shift_mask(mask: NDArray, du: float, dv: float) -> NDArray[np.bool_]:
    m = np.asarray(mask, dtype=np.uint8)
    h, w = m.shape
    a = np.float32([[1, 0, du], [0, 1, dv]])
    return cv2.warpAffine(m, a, (w, h), flags=cv2.INTER_NEAREST, borderValue=0).astype(bool)


def propagate_mask(prev_mask: NDArray, flow: NDArray, frame: RgbdFrame, pose: Se3Pose,
                   diameter: float, params: TrackParams) -> NDArray[np.bool_]:
    """Shift by the median flow, dilate, and keep valid depth near the tracked object."""
    med = np.median(flow, axis=0) if len(flow) else np.zeros(2)
    m = shift_mask(prev_mask, med[0], med[1])
    if params.mask_dilation > 0:
        m = ndimage.binary_dilation(m, iterations=params.mask_dilation)
    m &= frame.depth > 0
    if diameter > 0 and m.any():
        vs, us = np.nonzero(m)
        pts, _ = frame.lift_pixels(np.stack([us, vs], axis=1))
        near = np.linalg.norm(pts - pose.translation, axis=1) <= params.mask_radius_factor * diameter
        m[vs[~near], us[~near]] = False
    return m


def estimate_motion(p1: NDArray, p2: NDArray, params: TrackParams) -> Se3Pose:
    """Camera-frame rigid motion from lifted correspondences via per-frame canonicalization."""
    f1 = canonical_frame(p1.mean(axis=0), params.up)
    f2 = canonical_frame(p2.mean(axis=0), params.up)
    w = None
    if params.feature_estimator is not None:
        q1, q2 = PointCloud(f1.to_canonical(p1)), PointCloud(f1.to_canonical(p2))
        r_shared = np.asarray(params.feature_estimator(build_motion_features(q1, q2, frame=f1)))
        r_rel = f1.r_p @ r_shared @ f1.r_p.T
    else:
        r_can, w = robust_rotation(f1.to_canonical(p1), f2.to_canonical(p2))
        r_rel = camera_relative_rotation(r_can, f1, f2)
    t_rel = estimate_relative_translation(r_rel, p1, p2, w)
    return Se3Pose(r_rel, t_rel).orthonormalized()


def estimate_motion_lsq(p1: NDArray, p2: NDArray, params: TrackParams) -> Se3Pose:
    """Unweighted least-squares counterpart of :func:`estimate_motion` (no outlier handling)."""
    f1 = canonical_frame(p1.mean(axis=0), params.up)
    f2 = canonical_frame(p2.mean(axis=0), params.up)
    a, b = f1.to_canonical(p1), f2.to_canonical(p2)
    if len(a) < 3 or np.linalg.svd(a - a.mean(axis=0), compute_uv=False)[1] <= 1e-12:
        raise DegenerateConfiguration("need 3 non-collinear correspondences")
    r_can = kabsch_rotation(a - a.mean(axis=0), b - b.mean(axis=0), np.ones(len(a)))
    r_rel = project_to_so3(camera_relative_rotation(r_can, f1, f2))
    return Se3Pose(r_rel, (p2 - p1 @ r_rel.T).mean(axis=0))


def _subsample(points: NDArray, n: int) -> NDArray:
    if len(points) > n:
        points = points[np.linspace(0, len(points) - 1, n).round().astype(np.int64)]
    return points


def lifted_matches(matches: Matches, prev: RgbdFrame, cur: RgbdFrame) -> tuple[NDArray, NDArray, NDArray[np.bool_]]:
    p1, ok1 = prev.lift_pixels(matches.src)
    p2, ok2 = cur.lift_subpixel(matches.dst)
    ok = ok1 & ok2
    return p1, p2, ok


def compensated_flow(prev: RgbdFrame, cur: RgbdFrame, seed_mask: NDArray, seeds: NDArray,
                     params: TrackParams) -> Matches:
    """LK flow refined by motion-compensated passes.

    Each extra pass estimates the rigid motion from the previous (unfiltered)
    matches and re-tracks against the current frame warped back by it, which
    removes most of the bias a translational LK window has under rotation.
    """
    matches = flow_correspondences(prev, cur, seed_mask, params.flow, seeds=seeds)
    for _ in range(params.flow_passes - 1):
        p1, p2, ok = lifted_matches(matches, prev, cur)
        if ok.sum() < params.min_matches:
            break
        try:
            motion = estimate_motion(p1[ok], p2[ok], params)
        except (AlgorithmFailure, DataError):
            break
        matches = flow_correspondences(prev, cur, seed_mask, params.flow, seeds=seeds, predicted=motion)
    return matches


def track_step_detailed(state: TrackState, frame: RgbdFrame,
                        params: Optional[TrackParams] = None,
                        matches: Optional[Matches] = None) -> tuple[TrackState, Se3Pose, StepDiagnostics]:
    """One tracking cycle; ``matches`` overrides the built-in flow (external flow path)."""
    params = params or TrackParams()
    prev = state.prev_frame
    if frame.shape != prev.shape:
        raise DataError("frame dimensions changed during tracking")
    if not state.prev_mask.any():
        raise TrackingLost("empty object mask")
    if state.prev_lab is None:
        prev_lab, prev_edges = edges_in_box(prev.rgb, mask_box(state.prev_mask, params.extraction.crop_margin),
                                            params.extraction)
    else:
        prev_lab, prev_edges = state.prev_lab, state.prev_edges
    cur_box = mask_box(state.prev_mask, params.search_margin)
    cur_lab, cur_edges = edges_in_box(frame.rgb, cur_box, params.extraction)

    seed_mask = state.prev_mask
    if params.seed_erosion > 0:
        seed_mask = ndimage.binary_erosion(seed_mask, iterations=params.seed_erosion)
    try:
        if matches is None:
            seeds = edge_seeds(prev_edges.is_centerline, seed_mask)
            matches = compensated_flow(prev, frame, seed_mask, seeds, params)
    except AlgorithmFailure as e:
        raise TrackingLost(f"flow failed: {e}") from e
    if params.use_filter:
        kept_matches, keep = filter_by_colorpair(matches, prev_lab, cur_lab, prev_edges, cur_edges,
                                                 params=params.filter)
    else:
        kept_matches, keep = matches, np.ones(len(matches), bool)
    p1, p2, ok = lifted_matches(kept_matches, prev, frame)
    if ok.sum() < params.min_matches:
        raise TrackingLost(f"{int(ok.sum())} usable correspondences, need {params.min_matches}")
    try:
        rel = estimate_motion(p1[ok], p2[ok], params)
    except (AlgorithmFailure, DataError) as e:
        raise TrackingLost(f"motion estimate failed: {e}") from e
    predicted = rel @ state.pose
    new_mask = propagate_mask(state.prev_mask, kept_matches.flow[ok], frame, predicted,
                              state.diameter, params)
    pose = predicted
    if params.polish:
        scene = _subsample(frame.masked_points(new_mask), params.max_scene_points)
        try:
            pose = point_to_plane_icp(PointCloud(scene), state.target, predicted, params.icp_iters,
                                      params.icp_max_distance, tree=state.tree)
        except AlgorithmFailure as e:
            raise TrackingLost(f"ICP polish failed: {e}") from e
    new_state = TrackState(pose, frame, new_mask, state.model, state.frame_index + 1, state.surface,
                           state.diameter, state.tree, cur_lab, cur_edges)
    return new_state, pose, StepDiagnostics(matches, keep, predicted, rel)


def track_step(state: TrackState, frame: RgbdFrame,
               params: Optional[TrackParams] = None) -> tuple[TrackState, Se3Pose]:
    new_state, pose, _ = track_step_detailed(state, frame, params)
    return new_state, pose
