"""Color-pair consistency filter for frame-to-frame correspondences."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from ..colorpair import EdgeMap, SamplingParams, rowwise_similarity, sample_color_pairs
from .flow import Matches


@dataclass(frozen=True)
class FilterParams:
    threshold: float = 0.7
    snap_radius: float = 2.0  # pixels to the nearest centerline
    require_edges: bool = True
    lightness_weight: float = 0.3
    sampling: SamplingParams = field(default_factory=SamplingParams)


def _snap(points: NDArray, edges: EdgeMap, radius: float) -> tuple[NDArray, NDArray[np.bool_]]:
    """Nearest centerline pixel (u, v) per point and whether it lies within ``radius``."""
    h, w = edges.shape
    if not edges.is_centerline.any():
        return np.zeros((len(points), 2), np.int64), np.zeros(len(points), bool)
    dist, (iv, iu) = ndimage.distance_transform_edt(~edges.is_centerline, return_indices=True)
    r = np.clip(np.rint(points[:, 1]).astype(np.int64), 0, h - 1)
    c = np.clip(np.rint(points[:, 0]).astype(np.int64), 0, w - 1)
    snapped = np.stack([iu[r, c], iv[r, c]], axis=1)
    d = np.linalg.norm(snapped - points, axis=1)
    return snapped, d <= radius


def _pairs_at(lab: NDArray, edges: EdgeMap, pix: NDArray, params: FilterParams):
    """(c1, c2, ok) for each pixel; ok is False where sampling found no valid pair."""
    h, w = edges.shape
    c1 = np.zeros((len(pix), 3))
    c2 = np.zeros((len(pix), 3))
    ok = np.zeros(len(pix), bool)
    if len(pix) == 0:
        return c1, c2, ok
    flat = pix[:, 1] * w + pix[:, 0]
    uniq = np.unique(flat)
    upix = np.stack([uniq % w, uniq // w], axis=1)
    pairs = sample_color_pairs(lab, edges, np.ones((h, w), bool), params.sampling, pixels=upix)
    if len(pairs) == 0:
        return c1, c2, ok
    got = (pairs.pixel[:, 1] * w + pairs.pixel[:, 0]).astype(np.int64)
    pos = np.searchsorted(got, flat)
    pos = np.clip(pos, 0, len(got) - 1)
    ok = got[pos] == flat
    c1[ok] = pairs.c1[pos[ok]]
    c2[ok] = pairs.c2[pos[ok]]
    return c1, c2, ok


def _candidates(points: NDArray, edges: EdgeMap, radius: float) -> tuple[NDArray, NDArray, NDArray]:
    """All centerline pixels within ``radius`` of each point: (match index, u, v)."""
    h, w = edges.shape
    r = int(np.ceil(radius))
    du, dv = np.meshgrid(np.arange(-r, r + 1), np.arange(-r, r + 1))
    off = np.stack([du.ravel(), dv.ravel()], axis=1)
    base = np.rint(points).astype(np.int64)
    cand = base[:, None, :] + off[None, :, :]
    idx = np.broadcast_to(np.arange(len(points))[:, None], cand.shape[:2])
    cand, idx = cand.reshape(-1, 2), idx.reshape(-1)
    inside = (cand[:, 0] >= 0) & (cand[:, 0] < w) & (cand[:, 1] >= 0) & (cand[:, 1] < h)
    cand, idx = cand[inside], idx[inside]
    near = np.linalg.norm(cand - np.repeat(points, len(off), axis=0)[inside], axis=1) <= radius
    cand, idx = cand[near], idx[near]
    on = edges.is_centerline[cand[:, 1], cand[:, 0]]
    return idx[on], cand[on, 0], cand[on, 1]


def colorpair_match_scores(matches: Matches, prev_lab: NDArray, cur_lab: NDArray,
                           prev_edges: EdgeMap, cur_edges: EdgeMap,
                           params: Optional[FilterParams] = None) -> tuple[NDArray, NDArray[np.bool_]]:
    """Similarity between the pairs at both endpoints, and whether both endpoints had edges.

    The source snaps to its nearest centerline. Every centerline pixel within the
    snap radius of the endpoint is a candidate and the best-scoring one counts, so
    a neighbouring edge (typically the silhouette) cannot shadow the tracked one.
    """
    params = params or FilterParams()
    n = len(matches)
    score = np.zeros(n)
    has = np.zeros(n, bool)
    sp, okp = _snap(matches.src, prev_edges, params.snap_radius)
    ia = np.flatnonzero(okp)
    a1, a2, va = _pairs_at(prev_lab, prev_edges, sp[ia], params)
    ia, a1, a2 = ia[va], a1[va], a2[va]
    if len(ia) == 0:
        return score, has
    row = np.full(n, -1)
    row[ia] = np.arange(len(ia))
    mi, cu, cv = _candidates(matches.dst[ia], cur_edges, params.snap_radius)
    mi = ia[mi]
    b1, b2, vb = _pairs_at(cur_lab, cur_edges, np.stack([cu, cv], axis=1), params)
    mi, b1, b2 = mi[vb], b1[vb], b2[vb]
    if len(mi) == 0:
        return score, has
    r = row[mi]
    sim = rowwise_similarity(a1[r], a2[r], b1, b2, params.lightness_weight)
    np.maximum.at(score, mi, sim)
    has[mi] = True
    return score, has


def filter_by_colorpair(matches: Matches, prev_lab: NDArray, cur_lab: NDArray,
                        prev_edges: EdgeMap, cur_edges: EdgeMap,
                        threshold: Optional[float] = None,
                        params: Optional[FilterParams] = None) -> tuple[Matches, NDArray[np.bool_]]:
    """Keep matches whose endpoint color pairs agree; returns (kept matches, keep mask)."""
    params = params or FilterParams()
    thr = params.threshold if threshold is None else threshold
    if len(matches) == 0:
        return Matches.empty(), np.zeros(0, bool)
    score, has = colorpair_match_scores(matches, prev_lab, cur_lab, prev_edges, cur_edges, params)
    keep = np.where(has, score >= thr, not params.require_edges)
    return matches.subset(keep), keep
