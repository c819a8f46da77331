"""Pose and flow error metrics: ADD, ADD-S, recall, AUC, normalized motion errors, EPE."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import cKDTree

from .core import Se3Pose, rotation_angle
from .errors import DataError, LengthMismatch, ZeroMotion

RECALL_FRACTION = 0.1


def _points(model_points: NDArray) -> NDArray[np.float64]:
    p = np.asarray(model_points, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        raise DataError("need at least one model point")
    return p


def add_error(est: Se3Pose, gt: Se3Pose, model_points: NDArray) -> float:
    p = _points(model_points)
    return float(np.mean(np.linalg.norm(est.apply(p) - gt.apply(p), axis=1)))


def adds_error(est: Se3Pose, gt: Se3Pose, model_points: NDArray) -> float:
    """Mean distance from each estimated point to the nearest ground-truth point (k-d tree)."""
    p = _points(model_points)
    d, _ = cKDTree(gt.apply(p)).query(est.apply(p))
    return float(np.mean(d))


def adds_error_bruteforce(est: Se3Pose, gt: Se3Pose, model_points: NDArray,
                          chunk: int = 2048) -> float:
    p = _points(model_points)
    a, b = est.apply(p), gt.apply(p)
    best = np.empty(len(a))
    for s in range(0, len(a), chunk):
        d = np.linalg.norm(a[s:s + chunk, None, :] - b[None, :, :], axis=2)
        best[s:s + chunk] = d.min(axis=1)
    return float(np.mean(best))


def add_recall(errors: Iterable[float], diameter: float, fraction: float = RECALL_FRACTION) -> float:
    if not diameter > 0:
        raise DataError("diameter must be positive")
    e = np.asarray(list(errors), dtype=np.float64)
    if len(e) == 0:
        return 0.0
    return float(np.mean(e < fraction * diameter))


def add_auc(errors: Iterable[float], diameter: float, fraction: float = RECALL_FRACTION,
            steps: int = 1000) -> float:
    """Area under the accuracy-threshold curve for thresholds in [0, fraction x diameter], in [0, 1]."""
    if not diameter > 0:
        raise DataError("diameter must be positive")
    e = np.sort(np.asarray(list(errors), dtype=np.float64))
    if len(e) == 0:
        return 0.0
    thr = np.linspace(0.0, fraction * diameter, steps + 1)[1:]
    acc = np.searchsorted(e, thr, side="left") / len(e)
    return float(np.mean(acc))


def normalized_motion_errors(est_rel: Se3Pose, gt_rel: Se3Pose) -> tuple[Optional[float], Optional[float]]:
    """(rotation residual / true rotation angle, translation residual / true translation).

    A component whose true motion is zero is reported as None; if both are
    zero the whole comparison is undefined and ZeroMotion is raised.
    """
    gt_ang = rotation_angle(gt_rel.rotation, np.eye(3))
    gt_t = float(np.linalg.norm(gt_rel.translation))
    if gt_ang <= 0 and gt_t <= 0:
        raise ZeroMotion("ground-truth motion is zero")
    rot = rotation_angle(est_rel.rotation, gt_rel.rotation) / gt_ang if gt_ang > 0 else None
    trans = float(np.linalg.norm(est_rel.translation - gt_rel.translation)) / gt_t if gt_t > 0 else None
    return rot, trans


def endpoint_error(flow_est: NDArray, flow_gt: NDArray) -> float:
    a = np.asarray(flow_est, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(flow_gt, dtype=np.float64).reshape(-1, 2)
    if len(a) != len(b):
        raise LengthMismatch("flows must pair up")
    if len(a) == 0:
        raise DataError("no flow vectors")
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


@dataclass(frozen=True)
class PoseErrorRecord:
    frame: int
    add: float
    adds: float
    rot_err: float  # degrees
    trans_err: float  # meters

    def __post_init__(self) -> None:
        vals = (self.add, self.adds, self.rot_err, self.trans_err)
        if min(vals) < 0 or not all(np.isfinite(vals)):
            raise DataError("pose errors must be finite and non-negative")
        if self.adds > self.add + 1e-12:
            raise DataError("ADD-S cannot exceed ADD")


def pose_error_record(frame: int, est: Se3Pose, gt: Se3Pose, model_points: NDArray) -> PoseErrorRecord:
    add = add_error(est, gt, model_points)
    adds = min(adds_error(est, gt, model_points), add)
    return PoseErrorRecord(frame, add, adds, float(np.rad2deg(rotation_angle(est.rotation, gt.rotation))),
                           float(np.linalg.norm(est.translation - gt.translation)))


def summarize(records: Sequence[PoseErrorRecord], diameter: float) -> dict:
    """Recall and AUC at 10% of the diameter for ADD and ADD-S, plus mean errors."""
    add = [r.add for r in records]
    adds = [r.adds for r in records]
    mean = (lambda xs: float(np.mean(xs)) if len(xs) else 0.0)
    return {
        "frames": len(records),
        "diameter": float(diameter),
        "add_recall": add_recall(add, diameter),
        "adds_recall": add_recall(adds, diameter),
        "add_auc": add_auc(add, diameter),
        "adds_auc": add_auc(adds, diameter),
        "mean_add": mean(add),
        "mean_adds": mean(adds),
        "mean_rot_err": mean([r.rot_err for r in records]),
        "mean_trans_err": mean([r.trans_err for r in records]),
    }


def write_records_csv(path, records: Sequence[PoseErrorRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "add", "adds", "rot_err", "trans_err"])
        for r in records:
            w.writerow([r.frame, repr(r.add), repr(r.adds), repr(r.rot_err), repr(r.trans_err)])


def read_records_csv(path) -> list[PoseErrorRecord]:
    with open(path, newline="") as fh:
        return [PoseErrorRecord(int(row["frame"]), float(row["add"]), float(row["adds"]),
                                float(row["rot_err"]), float(row["trans_err"]))
                for row in csv.DictReader(fh)]


def write_summary_json(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def records_as_dicts(records: Sequence[PoseErrorRecord]) -> list[dict]:
    return [asdict(r) for r in records]
