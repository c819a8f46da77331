"""Single-frame pose estimation: classify, hash lookup, vote, refine."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional


from .colorpair import ClassDb, ExtractionParams
from .core import RgbdFrame, Se3Pose
from .errors import AlgorithmFailure, NoHypotheses
from .refine import IcpParams, IcpReport, icp_multiclass
from .registration import (COARSE_BINS, FINE_BINS, ClassifiedCloud, HoughBins, HypothesisParams,
                           PoseHypothesis, TriangleHashDb, VoteParams, classify_scene,
                           generate_hypotheses, hough_vote)


@dataclass(frozen=True)
class EstimateParams:
    extraction: ExtractionParams = field(default_factory=ExtractionParams)
    hypotheses: HypothesisParams = field(default_factory=HypothesisParams)
    max_hypotheses: int = 4000
    coarse_bins: HoughBins = COARSE_BINS
    fine_bins: HoughBins = FINE_BINS
    vote: VoteParams = field(default_factory=VoteParams)
    top_k: int = 5
    icp: IcpParams = field(default_factory=IcpParams)


@dataclass(frozen=True, eq=False)
class EstimateResult:
    pose: Se3Pose
    scene: ClassifiedCloud
    hypotheses: list[PoseHypothesis]
    votes: list[tuple[Se3Pose, float]]
    report: Optional[IcpReport]
    candidate: int  # index into votes that won after refinement


def _support(report: IcpReport, aggregate_weight: float) -> float:
    per_class = sum(v for k, v in report.inliers.items() if k >= 0)
    return per_class + aggregate_weight * report.inliers.get(-1, 0)


def estimate_pose(frame: RgbdFrame, class_db: ClassDb, hash_db: TriangleHashDb,
                  params: Optional[EstimateParams] = None) -> EstimateResult:
    """Model-to-camera pose of the masked object in ``frame``."""
    params = params or EstimateParams()
    scene = classify_scene(frame, class_db, params.extraction)
    if len(scene) == 0:
        raise NoHypotheses("no color-pair edge points in the masked region")
    hyps = generate_hypotheses(scene, hash_db, params.max_hypotheses, params.hypotheses)
    votes = hough_vote(hyps, params.coarse_bins, params.fine_bins, params.top_k, params.vote)
    best: Optional[tuple[float, float, int, IcpReport]] = None
    for i, (pose, _) in enumerate(votes):
        try:
            rep = icp_multiclass(scene, hash_db.model, pose, params.icp)
        except AlgorithmFailure:
            continue
        key = (_support(rep, params.icp.aggregate_weight), -rep.rms)
        if best is None or key > best[:2]:
            best = (key[0], key[1], i, rep)
    if best is None:
        return EstimateResult(votes[0][0], scene, hyps, votes, None, 0)
    return EstimateResult(best[3].pose, scene, hyps, votes, best[3], best[2])
