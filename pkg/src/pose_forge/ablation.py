"""Filtered vs unfiltered raw motion estimates on corrupted correspondences at a frame stride."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from .colorpair import edges_in_box, mask_box
from .core import RgbdFrame, Se3Pose, project
from .errors import AlgorithmFailure, DataError
from .metrics import endpoint_error, normalized_motion_errors
from .tracking.flow import Matches, edge_seeds
from .tracking.filtering import filter_by_colorpair
from .tracking.tracker import (TrackParams, compensated_flow, estimate_motion, estimate_motion_lsq,
                               lifted_matches)

CSV_COLUMNS = ("pair", "epe_raw", "epe_filt", "rot_raw", "rot_filt", "trans_raw", "trans_filt")


@dataclass(frozen=True)
class AblationParams:
    stride: int = 5
    corruption: float = 0.2  # fraction of matches whose endpoint is replaced by a gross mismatch
    estimator: str = "raw"  # "raw": unweighted least squares, "robust": the tracker's estimator
    track: TrackParams = field(default_factory=TrackParams)

    def __post_init__(self) -> None:
        if self.stride < 1:
            raise DataError("stride must be >= 1")
        if not 0.0 <= self.corruption < 1.0:
            raise DataError("corruption must lie in [0, 1)")
        if self.estimator not in ("raw", "robust"):
            raise DataError(f"unknown estimator {self.estimator!r}")


@dataclass(frozen=True)
class AblationRow:
    pair: str
    epe_raw: float
    epe_filt: float
    rot_raw: float
    rot_filt: float
    trans_raw: float
    trans_filt: float

    @property
    def filtered_wins(self) -> bool:
        return self.rot_filt < self.rot_raw and self.trans_filt < self.trans_raw


def corrupt_matches(matches: Matches, fraction: float, box: tuple[int, int, int, int],
                    rng: np.random.Generator) -> tuple[Matches, NDArray[np.bool_]]:
    """Replace the endpoint of a random ``fraction`` of matches by a uniform pixel in ``box``.

    ``box`` is (v0, v1, u0, u1) with exclusive upper bounds, as from ``mask_box``.
    """
    n = len(matches)
    bad = np.zeros(n, bool)
    bad[rng.choice(n, int(round(fraction * n)), replace=False)] = True
    v0, v1, u0, u1 = box
    dst = matches.dst.copy()
    k = int(bad.sum())
    dst[bad] = np.stack([rng.uniform(u0, u1 - 1, k), rng.uniform(v0, v1 - 1, k)], axis=1)
    return Matches(matches.src, dst), bad


def ground_truth_flow(matches: Matches, prev: RgbdFrame, gt_rel: Se3Pose) -> tuple[NDArray, NDArray[np.bool_]]:
    """True endpoint of each source pixel from its depth and the true relative motion."""
    p, ok = prev.lift_pixels(matches.src)
    return project(gt_rel.apply(p), prev.intrinsics), ok


def ablate_pair(prev: RgbdFrame, cur: RgbdFrame, gt_rel: Se3Pose, rng: np.random.Generator,
                params: Optional[AblationParams] = None, label: str = "") -> AblationRow:
    params = params or AblationParams()
    tp = params.track
    mask = prev.mask
    seed_mask = ndimage.binary_erosion(mask, iterations=tp.seed_erosion) if tp.seed_erosion > 0 else mask
    prev_lab, prev_edges = edges_in_box(prev.rgb, mask_box(mask, tp.extraction.crop_margin), tp.extraction)
    box = mask_box(mask, tp.search_margin)
    if box is None:
        raise DataError(f"pair {label}: empty object mask")
    cur_lab, cur_edges = edges_in_box(cur.rgb, box, tp.extraction)
    clean = compensated_flow(prev, cur, seed_mask, edge_seeds(prev_edges.is_centerline, seed_mask), tp)
    noisy, _ = corrupt_matches(clean, params.corruption, box, rng)
    estimate = estimate_motion_lsq if params.estimator == "raw" else estimate_motion
    filt, _ = filter_by_colorpair(noisy, prev_lab, cur_lab, prev_edges, cur_edges, params=tp.filter)
    out = []
    for m in (noisy, filt):
        p1, p2, ok = lifted_matches(m, prev, cur)
        if ok.sum() < tp.min_matches:
            raise AlgorithmFailure(f"pair {label}: only {int(ok.sum())} usable correspondences")
        est = estimate(p1[ok], p2[ok], tp)
        rot, trans = normalized_motion_errors(est, gt_rel)
        gt_dst, gok = ground_truth_flow(m, prev, gt_rel)
        epe = endpoint_error(m.dst[gok], gt_dst[gok])
        out.append((epe, rot, trans))
    (e0, r0, t0), (e1, r1, t1) = out
    return AblationRow(label, e0, e1, r0, r1, t0, t1)


def ablate_sequence(frames: Sequence[RgbdFrame], poses: Sequence[Se3Pose], seed: int = 0,
                    params: Optional[AblationParams] = None) -> list[AblationRow]:
    """Rows for pairs (i, i + stride) for every i that is a multiple of the stride."""
    params = params or AblationParams()
    if len(frames) != len(poses):
        raise DataError("frames and poses must pair up")
    if len(frames) <= params.stride:
        raise DataError(f"ablation needs more than {params.stride} frames, got {len(frames)}")
    rows = []
    for i in range(0, len(frames) - params.stride, params.stride):
        j = i + params.stride
        rng = np.random.default_rng([seed, i])
        gt_rel = poses[j] @ poses[i].inverse()
        rows.append(ablate_pair(frames[i], frames[j], gt_rel, rng, params, f"{i}-{j}"))
    return rows


def write_ablation_csv(path, rows: Sequence[AblationRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in rows:
            w.writerow([r.pair] + [repr(float(getattr(r, c))) for c in CSV_COLUMNS[1:]])
