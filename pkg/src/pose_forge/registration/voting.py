"""Two-stage coarse-to-fine Hough voting over 6-D poses with non-maximum suppression."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.spatial.transform import Rotation

from ..core import Se3Pose
from ..errors import NoHypotheses
from .hypotheses import PoseHypothesis

_NEIGHBORS = np.array(list(itertools.product((-1, 0, 1), repeat=6)), dtype=np.int64)
_BIN_OFFSET = 1 << 9  # shifts signed bin coordinates into 10-bit fields


@dataclass(frozen=True)
class HoughBins:
    rotation_deg: float
    translation: float  # meters

    @property
    def rotation_rad(self) -> float:
        return np.deg2rad(self.rotation_deg)


COARSE_BINS = HoughBins(30.0, 0.05)
FINE_BINS = HoughBins(7.5, 0.01)


@dataclass(frozen=True)
class VoteParams:
    coarse_keep: int = 8  # coarse peaks whose neighborhoods go to the fine stage
    nms_factor: float = 2.0  # NMS radius in fine bins


def _bin_coords(rotvec: NDArray, trans: NDArray, bins: HoughBins) -> NDArray[np.int64]:
    return np.concatenate([np.floor(rotvec / bins.rotation_rad),
                           np.floor(trans / bins.translation)], axis=1).astype(np.int64)


def _pack(coords: NDArray) -> NDArray[np.int64]:
    c = np.clip(coords + _BIN_OFFSET, 0, 2 * _BIN_OFFSET - 1)
    out = np.zeros(c.shape[:-1], dtype=np.int64)
    for i in range(6):
        out = (out << 10) | c[..., i]
    return out


def _capped(feature: NDArray, bins: NDArray, weight: NDArray) -> NDArray[np.bool_]:
    """Mask keeping each feature's best-weighted hypothesis per bin (lowest index on ties)."""
    order = np.lexsort((np.arange(len(weight)), -weight, bins, feature))
    f, b = feature[order], bins[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = (f[1:] != f[:-1]) | (b[1:] != b[:-1])
    keep = np.zeros(len(weight), dtype=bool)
    keep[order[first]] = True
    return keep


def _smoothed_scores(packed: NDArray, coords: NDArray, weight: NDArray) -> tuple[NDArray, NDArray, NDArray]:
    """Per occupied bin: (packed id, coords, weight summed over the 3^6 neighborhood)."""
    uniq, first, inv = np.unique(packed, return_index=True, return_inverse=True)
    inv = inv.reshape(-1)
    raw = np.bincount(inv, weights=weight, minlength=len(uniq))
    ucoords = coords[first]
    nb = _pack(ucoords[:, None, :] + _NEIGHBORS[None])
    pos = np.clip(np.searchsorted(uniq, nb), 0, len(uniq) - 1)
    hit = uniq[pos] == nb
    smooth = np.where(hit, raw[pos], 0.0).sum(axis=1)
    return uniq, ucoords, smooth


def _geodesic(qs: NDArray, q: NDArray) -> NDArray:
    return 2.0 * np.arccos(np.clip(np.abs(qs @ q), 0.0, 1.0))


def weighted_quaternion_mean(quats: NDArray, weights: NDArray, reference: Optional[NDArray] = None) -> NDArray:
    """Sign-aligned weighted mean of unit quaternions (x, y, z, w), renormalized."""
    quats = np.asarray(quats, dtype=np.float64).reshape(-1, 4)
    ref = quats[int(np.argmax(weights))] if reference is None else np.asarray(reference, float)
    signs = np.where(quats @ ref < 0, -1.0, 1.0)
    m = (weights[:, None] * signs[:, None] * quats).sum(axis=0)
    return m / np.linalg.norm(m)


def hough_vote(hyps: Sequence[PoseHypothesis], coarse_bins: HoughBins = COARSE_BINS,
               fine_bins: HoughBins = FINE_BINS, top_k: int = 5,
               params: Optional[VoteParams] = None) -> list[tuple[Se3Pose, float]]:
    """Coarse density bins -> fine re-binning of survivors -> 6-D NMS -> weighted cluster means."""
    if not hyps:
        raise NoHypotheses("hough_vote needs at least one hypothesis")
    params = params or VoteParams()
    rot = np.array([h.pose.rotation for h in hyps])
    trans = np.array([h.pose.translation for h in hyps])
    weight = np.array([h.weight for h in hyps], dtype=np.float64)
    feature = np.array([h.feature_id for h in hyps], dtype=np.int64)
    # hypotheses without a feature id each count as their own feature
    anon = feature < 0
    feature[anon] = -1 - np.flatnonzero(anon)
    r = Rotation.from_matrix(rot)
    rotvec = r.as_rotvec()
    quat = r.as_quat()

    # stage 1: coarse accumulation with the per-feature cap
    cc = _bin_coords(rotvec, trans, coarse_bins)
    cp = _pack(cc)
    cap = _capped(feature, cp, weight)
    uniq, ucoords, smooth = _smoothed_scores(cp[cap], cc[cap], weight[cap])
    # greedy coarse NMS so one dense mode cannot take every kept peak
    top: list[int] = []
    for b in np.lexsort((uniq, -smooth)):
        if len(top) >= params.coarse_keep:
            break
        if all(np.abs(ucoords[b] - ucoords[t]).max() > 1 for t in top):
            top.append(int(b))
    near = np.zeros(len(hyps), dtype=bool)
    for c in ucoords[top]:
        near |= np.all(np.abs(cc - c) <= 1, axis=1)
    idx = np.flatnonzero(near)

    # stage 2: fine bins over survivors, again capped per feature
    fc = _bin_coords(rotvec[idx], trans[idx], fine_bins)
    fp = _pack(fc)
    fcap = _capped(feature[idx], fp, weight[idx])
    idx, fc, fp = idx[fcap], fc[fcap], fp[fcap]
    funiq, fcoords, fsmooth = _smoothed_scores(fp, fc, weight[idx])
    order = np.lexsort((funiq, -fsmooth))

    rad_r = fine_bins.rotation_rad
    rad_t = fine_bins.translation
    results: list[tuple[Se3Pose, float]] = []
    kept_q: list[NDArray] = []
    kept_t: list[NDArray] = []
    member_bin = np.searchsorted(funiq, fp)
    for b in order:
        if len(results) >= top_k:
            break
        in_bin = idx[member_bin == b]
        # seed: weighted mean of the peak bin's members
        q0 = weighted_quaternion_mean(quat[in_bin], weight[in_bin])
        t0 = np.average(trans[in_bin], axis=0, weights=weight[in_bin])
        if any(_geodesic(np.array([kq]), q0)[0] < params.nms_factor * rad_r and
               np.linalg.norm(kt - t0) < params.nms_factor * rad_t for kq, kt in zip(kept_q, kept_t)):
            continue
        # members within one fine bin of the seed, one per feature (its best)
        close = idx[(_geodesic(quat[idx], q0) <= rad_r) &
                    (np.linalg.norm(trans[idx] - t0, axis=1) <= rad_t)]
        if len(close) == 0:
            close = in_bin
        best = _capped(feature[close], np.zeros(len(close), np.int64), weight[close])
        close = close[best]
        q = weighted_quaternion_mean(quat[close], weight[close], q0)
        t = np.average(trans[close], axis=0, weights=weight[close])
        pose = Se3Pose(Rotation.from_quat(q).as_matrix(), t)
        results.append((pose, float(weight[close].sum())))
        kept_q.append(q)
        kept_t.append(t)
    results.sort(key=lambda x: -x[1])
    return results
