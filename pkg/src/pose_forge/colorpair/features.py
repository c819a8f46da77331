"""Color-pair features: sampling across edges and the triangle similarity score."""

from __future__ import annotations

import warnings
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from ..errors import DegeneratePair
from .edges import EdgeMap, edge_nms_thickness, unified_gradient
from .lab import bilateral_prefilter, rgb_to_lab

LUMINANCE_EPS = 1.0
BLACK_EPS = 1e-6


@dataclass(frozen=True, eq=False)
class ColorPair:
    c1: NDArray[np.float64]
    c2: NDArray[np.float64]
    pixel: NDArray[np.float64] = field(default_factory=lambda: np.zeros(2))
    direction: NDArray[np.float64] = field(default_factory=lambda: np.array([1.0, 0.0]))
    thickness: float = 1.0

    def __post_init__(self) -> None:
        for name in ("c1", "c2", "pixel", "direction"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.thickness < 1:
            raise ValueError("thickness must be >= 1")

    def swapped(self) -> "ColorPair":
        return ColorPair(self.c2, self.c1, self.pixel, -self.direction, self.thickness)


@dataclass(frozen=True, eq=False)
class PairArray:
    """Columnar list of color pairs; iterating yields ``ColorPair`` values."""

    c1: NDArray[np.float64]
    c2: NDArray[np.float64]
    pixel: NDArray[np.float64]
    direction: NDArray[np.float64]
    thickness: NDArray[np.float64]

    @classmethod
    def empty(cls) -> "PairArray":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0))

    @classmethod
    def from_pairs(cls, pairs) -> "PairArray":
        pairs = list(pairs)
        if not pairs:
            return cls.empty()
        return cls(np.array([p.c1 for p in pairs]), np.array([p.c2 for p in pairs]),
                   np.array([p.pixel for p in pairs]), np.array([p.direction for p in pairs]),
                   np.array([float(p.thickness) for p in pairs]))

    @classmethod
    def concat(cls, parts) -> "PairArray":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(*(np.concatenate([getattr(p, a) for p in parts])
                     for a in ("c1", "c2", "pixel", "direction", "thickness")))

    def __len__(self) -> int:
        return len(self.c1)

    def __getitem__(self, i):
        if isinstance(i, (int, np.integer)):
            return ColorPair(self.c1[i], self.c2[i], self.pixel[i], self.direction[i],
                             float(self.thickness[i]))
        return PairArray(self.c1[i], self.c2[i], self.pixel[i], self.direction[i], self.thickness[i])

    def __iter__(self) -> Iterator[ColorPair]:
        return (self[i] for i in range(len(self)))


@contextmanager
def _quiet():
    # all-NaN slices are expected for fully masked candidate rows
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=RuntimeWarning)
        yield


def _as_arrays(pairs) -> tuple[NDArray, NDArray]:
    if isinstance(pairs, PairArray):
        return pairs.c1, pairs.c2
    if isinstance(pairs, ColorPair):
        return pairs.c1[None], pairs.c2[None]
    pa = PairArray.from_pairs(pairs)
    return pa.c1, pa.c2


def _cos_clamped(x: NDArray, y: NDArray) -> NDArray:
    """Clamped cosine between row vectors x (N, 1, 3) and y (1, K, 3)."""
    num = np.sum(x * y, axis=-1)
    den = np.linalg.norm(x, axis=-1) * np.linalg.norm(y, axis=-1)
    both_zero = den == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(both_zero, 0.0, num / np.where(both_zero, 1.0, den))
    return np.clip(c, 0.0, 1.0)


def _chroma_terms(a1, a2, b1, b2, w) -> NDArray:
    """D1 * D2: directional alignment times internal contrast."""
    d1 = _cos_clamped(a1 * w, b1 * w) * _cos_clamped(a2 * w, b2 * w)
    da = (a2 - a1) * w
    db = (b2 - b1) * w
    d2 = _cos_clamped(da, db)
    flat = (np.linalg.norm(da, axis=-1) == 0) & (np.linalg.norm(db, axis=-1) == 0)
    return d1 * np.where(flat, 1.0, d2)


def _ordered_score(a1, a2, b1, b2, w) -> NDArray:
    # ratio of ratios, written as a cross product so swapping both pairs is exact
    x = (a1[..., 0] + LUMINANCE_EPS) * (b2[..., 0] + LUMINANCE_EPS)
    y = (a2[..., 0] + LUMINANCE_EPS) * (b1[..., 0] + LUMINANCE_EPS)
    d3 = np.minimum(x, y) / np.maximum(x, y)
    return _chroma_terms(a1, a2, b1, b2, w) * d3


def similarity_matrix(a_c1: NDArray, a_c2: NDArray, b_c1: NDArray, b_c2: NDArray,
                      lightness_weight: float = 0.3) -> NDArray[np.float64]:
    """Scores between N pairs ``a`` and K pairs ``b`` -> (N, K); no degeneracy check."""
    w = np.array([lightness_weight, 1.0, 1.0])
    a1, a2 = np.asarray(a_c1, float)[:, None, :], np.asarray(a_c2, float)[:, None, :]
    b1, b2 = np.asarray(b_c1, float)[None, :, :], np.asarray(b_c2, float)[None, :, :]
    return np.maximum(_ordered_score(a1, a2, b1, b2, w), _ordered_score(a1, a2, b2, b1, w))


def rowwise_similarity(a_c1: NDArray, a_c2: NDArray, b_c1: NDArray, b_c2: NDArray,
                       lightness_weight: float = 0.3) -> NDArray[np.float64]:
    """Scores between row i of ``a`` and row i of ``b`` -> (N,)."""
    w = np.array([lightness_weight, 1.0, 1.0])
    a1, a2, b1, b2 = (np.asarray(x, float).reshape(-1, 3) for x in (a_c1, a_c2, b_c1, b_c2))
    return np.maximum(_ordered_score(a1, a2, b1, b2, w), _ordered_score(a1, a2, b2, b1, w))


def chroma_similarity_matrix(a_c1: NDArray, a_c2: NDArray, b_c1: NDArray, b_c2: NDArray,
                             lightness_weight: float = 0.3) -> NDArray[np.float64]:
    """Like ``similarity_matrix`` but without the luminance-ratio factor."""
    w = np.array([lightness_weight, 1.0, 1.0])
    a1, a2 = np.asarray(a_c1, float)[:, None, :], np.asarray(a_c2, float)[:, None, :]
    b1, b2 = np.asarray(b_c1, float)[None, :, :], np.asarray(b_c2, float)[None, :, :]
    return np.maximum(_chroma_terms(a1, a2, b1, b2, w), _chroma_terms(a1, a2, b2, b1, w))


def _check_nondegenerate(*colors: NDArray) -> None:
    for c in colors:
        if np.linalg.norm(c) <= BLACK_EPS:
            raise DegeneratePair("color coincides with black origin")


def colorpair_similarity(a: ColorPair, b: ColorPair, lightness_weight: float = 0.3) -> float:
    _check_nondegenerate(a.c1, a.c2, b.c1, b.c2)
    return float(similarity_matrix(a.c1[None], a.c2[None], b.c1[None], b.c2[None], lightness_weight)[0, 0])


@dataclass(frozen=True)
class SamplingParams:
    candidates_per_side: int = 5
    offset_factors: tuple[float, ...] = (0.75, 1.0, 1.5)
    max_offset: float = 8.0
    whiten_eps: float = 1e-3
    gate: float = 2.0
    min_inliers: int = 2


def _candidate_offsets(params: SamplingParams) -> list[tuple[float, int]]:
    """(normal factor, tangential pixel shift) per candidate on one side."""
    offs = [(a, 0) for a in params.offset_factors]
    extra = params.candidates_per_side - len(offs)
    shift = 1
    while extra > 0:
        for s in (shift, -shift):
            if extra > 0:
                offs.append((1.0, s))
                extra -= 1
        shift += 1
    return offs[: params.candidates_per_side]


def sample_color_pairs(img: NDArray, edges: EdgeMap, mask: NDArray,
                       params: Optional[SamplingParams] = None,
                       pixels: Optional[NDArray] = None) -> PairArray:
    """Gated per-side medians of thickness-scaled candidate samples.

    ``pixels`` restricts sampling to the given centerline (u, v) locations;
    by default every masked centerline pixel is used.
    """
    params = params or SamplingParams()
    lab = np.asarray(img, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    if pixels is None:
        pix = edges.centerline_pixels()
    else:
        pix = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
    if len(pix):
        pix = pix[mask[pix[:, 1], pix[:, 0]] & edges.is_centerline[pix[:, 1], pix[:, 0]]]
    if len(pix) == 0:
        return PairArray.empty()

    u, v = pix[:, 0].astype(float), pix[:, 1].astype(float)
    theta = edges.direction[pix[:, 1], pix[:, 0]]
    thick = edges.thickness[pix[:, 1], pix[:, 0]].astype(float)
    nx, ny = np.cos(theta), np.sin(theta)
    tx, ty = -ny, nx
    offs = _candidate_offsets(params)
    k = len(offs)
    cu = np.empty((len(pix), 2 * k))
    cv = np.empty((len(pix), 2 * k))
    for side_i, sign in enumerate((-1.0, 1.0)):
        for j, (alpha, tshift) in enumerate(offs):
            dist = np.minimum(alpha * thick, params.max_offset)
            col = side_i * k + j
            cu[:, col] = u + sign * dist * nx + tshift * tx
            cv[:, col] = v + sign * dist * ny + tshift * ty
    ci = np.rint(cu).astype(np.int64)
    cj = np.rint(cv).astype(np.int64)
    inside = (ci >= 0) & (ci < w) & (cj >= 0) & (cj < h)
    ci_c, cj_c = np.clip(ci, 0, w - 1), np.clip(cj, 0, h - 1)
    valid = inside & mask[cj_c, ci_c]
    cand = lab[cj_c, ci_c]  # (N, 2k, 3)

    nan_cand = np.where(valid[..., None], cand, np.nan)
    with _quiet():
        mean = np.nanmean(nan_cand, axis=1, keepdims=True)
        std = np.nanstd(nan_cand, axis=1, keepdims=True)
    white = (nan_cand - mean) / (np.nan_to_num(std) + params.whiten_eps)
    with _quiet():
        m1 = np.nanmedian(white[:, :k], axis=1)
        m2 = np.nanmedian(white[:, k:], axis=1)
    axis = m2 - m1
    alen = np.linalg.norm(axis, axis=1, keepdims=True)
    has_axis = np.isfinite(alen[:, 0]) & (alen[:, 0] > 1e-9)
    unit = np.where(has_axis[:, None], axis / np.where(alen > 1e-9, alen, 1.0), 0.0)
    rel = white - m1[:, None, :]
    along = np.sum(rel * unit[:, None, :], axis=-1, keepdims=True)
    resid = np.linalg.norm(rel - along * unit[:, None, :], axis=-1)
    inlier = valid & (~has_axis[:, None] | (resid <= params.gate))

    gated = np.where(inlier[..., None], cand, np.nan)
    n1 = inlier[:, :k].sum(axis=1)
    n2 = inlier[:, k:].sum(axis=1)
    keep = (n1 >= params.min_inliers) & (n2 >= params.min_inliers)
    if not keep.any():
        return PairArray.empty()
    with _quiet():
        c1 = np.nanmedian(gated[keep, :k], axis=1)
        c2 = np.nanmedian(gated[keep, k:], axis=1)
    return PairArray(c1, c2, pix[keep].astype(np.float64),
                     np.stack([nx[keep], ny[keep]], axis=1), np.maximum(thick[keep], 1.0))


@dataclass(frozen=True)
class ExtractionParams:
    spatial_sigma: float = 1.5
    range_sigma: float = 8.0
    mag_threshold: float = 4.0
    lightness_weight: float = 0.3
    crop_margin: int = 12
    mask_erosion: int = 3
    sampling: SamplingParams = field(default_factory=SamplingParams)


@dataclass(frozen=True, eq=False)
class Extraction:
    lab: NDArray[np.float64]  # filtered Lab, full frame (zeros outside crop)
    edges: EdgeMap
    pairs: PairArray


def mask_box(mask: NDArray, margin: int) -> Optional[tuple[int, int, int, int]]:
    """(v0, v1, u0, u1) bounding box of ``mask`` grown by ``margin`` and clipped."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return None
    h, w = mask.shape
    vs, us = np.nonzero(mask)
    return (max(0, vs.min() - margin), min(h, vs.max() + margin + 1),
            max(0, us.min() - margin), min(w, us.max() + margin + 1))


def _embed(a: NDArray, shape: tuple[int, int], box) -> NDArray:
    out = np.zeros(shape + a.shape[2:], dtype=a.dtype)
    v0, v1, u0, u1 = box
    out[v0:v1, u0:u1] = a
    return out


def edges_in_box(rgb: NDArray, box, params: Optional[ExtractionParams] = None) -> tuple[NDArray, EdgeMap]:
    """Filtered Lab and edge centerlines computed on a crop, embedded in the full frame."""
    params = params or ExtractionParams()
    h, w = np.asarray(rgb).shape[:2]
    if box is None:
        return np.zeros((h, w, 3)), EdgeMap(np.zeros((h, w), bool), np.zeros((h, w)),
                                             np.zeros((h, w)), np.zeros((h, w), np.int64))
    v0, v1, u0, u1 = box
    lab = bilateral_prefilter(rgb_to_lab(np.asarray(rgb)[v0:v1, u0:u1]),
                              params.spatial_sigma, params.range_sigma)
    em = edge_nms_thickness(unified_gradient(lab, params.lightness_weight), params.mag_threshold)
    edges = EdgeMap(*(_embed(a, (h, w), box) for a in
                      (em.is_centerline, em.magnitude, em.direction, em.thickness)))
    return _embed(lab, (h, w), box), edges


def extract_color_pairs(rgb: NDArray, mask: NDArray,
                        params: Optional[ExtractionParams] = None) -> Extraction:
    """Full chain: Lab, prefilter, gradient, centerlines, sampling (cropped to the mask)."""
    params = params or ExtractionParams()
    mask = np.asarray(mask, dtype=bool)
    box = mask_box(mask, params.crop_margin)
    lab, edges = edges_in_box(rgb, box, params)
    if box is None:
        return Extraction(lab, edges, PairArray.empty())
    sample_mask = mask
    if params.mask_erosion > 0:
        sample_mask = ndimage.binary_erosion(mask, iterations=params.mask_erosion)
    pairs = sample_color_pairs(lab, edges, sample_mask, params.sampling)
    return Extraction(lab, edges, pairs)
