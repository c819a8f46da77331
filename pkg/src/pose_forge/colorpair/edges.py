"""Unified Lab gradient and centerline extraction with thickness measurement."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

# 3x3 Scharr derivative kernels, normalized so a unit ramp gives gradient 1
_SCHARR_X = np.array([[-3.0, 0.0, 3.0], [-10.0, 0.0, 10.0], [-3.0, 0.0, 3.0]]) / 32.0
_SCHARR_Y = _SCHARR_X.T


@dataclass(frozen=True, eq=False)
class GradientField:
    magnitude: NDArray[np.float64]
    direction: NDArray[np.float64]  # radians, image axes (x right, y down)


@dataclass(frozen=True, eq=False)
class EdgeMap:
    is_centerline: NDArray[np.bool_]
    magnitude: NDArray[np.float64]
    direction: NDArray[np.float64]
    thickness: NDArray[np.int64]  # nonzero only on centerline pixels

    @property
    def shape(self) -> tuple[int, int]:
        return self.is_centerline.shape

    def centerline_pixels(self) -> NDArray[np.int64]:
        """(N, 2) array of (u, v) in row-major order."""
        vs, us = np.nonzero(self.is_centerline)
        return np.stack([us, vs], axis=1)

    def empty(self) -> bool:
        return not self.is_centerline.any()


def unified_gradient(img: NDArray, lightness_weight: float = 0.3) -> GradientField:
    lab = np.asarray(img, dtype=np.float64)
    weights = np.array([lightness_weight, 1.0, 1.0])
    gx = np.empty(lab.shape)
    gy = np.empty(lab.shape)
    for ch in range(3):
        gx[..., ch] = ndimage.correlate(lab[..., ch], _SCHARR_X, mode="nearest") * weights[ch]
        gy[..., ch] = ndimage.correlate(lab[..., ch], _SCHARR_Y, mode="nearest") * weights[ch]
    per_channel = np.hypot(gx, gy)
    magnitude = np.sqrt(np.sum(per_channel ** 2, axis=-1))
    dominant = np.argmax(per_channel, axis=-1)[..., None]
    dx = np.take_along_axis(gx, dominant, axis=-1)[..., 0]
    dy = np.take_along_axis(gy, dominant, axis=-1)[..., 0]
    return GradientField(magnitude, np.arctan2(dy, dx))


def _step_offsets(direction: NDArray) -> tuple[NDArray, NDArray]:
    return (np.rint(np.cos(direction)).astype(np.int64),
            np.rint(np.sin(direction)).astype(np.int64))


def edge_nms_thickness(grad: GradientField, mag_threshold: float = 4.0) -> EdgeMap:
    """Uphill association along the gradient axis; ridges become centerlines.

    Every supra-threshold pixel points to the strongest of itself and its two
    neighbors along its gradient axis; following pointers converges onto a
    ridge. A ridge's thickness is the number of pixels that reach it.
    """
    if mag_threshold <= 0:
        raise ValueError("mag_threshold must be positive")
    mag = grad.magnitude
    h, w = mag.shape
    n = h * w
    active = (mag >= mag_threshold).ravel()
    # strict total order: magnitude first, then lower linear index wins ties
    order = np.empty(n, dtype=np.int64)
    key = np.where(active, mag.ravel(), -np.inf)
    order[np.lexsort((-np.arange(n), key))] = np.arange(n)

    ox, oy = _step_offsets(grad.direction.ravel())
    idx = np.arange(n)
    vv, uu = np.divmod(idx, w)
    parent = idx.copy()
    best = order.copy()
    for sign in (1, -1):
        nu, nv = uu + sign * ox, vv + sign * oy
        ok = (nu >= 0) & (nu < w) & (nv >= 0) & (nv < h)
        nb = np.where(ok, nv * w + nu, idx)
        cand = np.where(ok & active[nb], order[nb], -1)
        better = cand > best
        parent = np.where(better, nb, parent)
        best = np.where(better, cand, best)
    parent[~active] = idx[~active]

    ridge = active & (parent == idx)
    # one-pixel-wide: of two ridges adjacent along either one's axis, the weaker joins the stronger
    while True:
        demote = np.zeros(n, dtype=bool)
        target = idx.copy()
        for sign in (1, -1):
            nu, nv = uu + sign * ox, vv + sign * oy
            ok = (nu >= 0) & (nu < w) & (nv >= 0) & (nv < h)
            nb = np.where(ok, nv * w + nu, idx)
            hit = np.flatnonzero(ridge & ok & ridge[nb] & (nb != idx))
            if hit.size == 0:
                continue
            other = nb[hit]
            up = order[other] > order[hit]
            weak = np.where(up, hit, other)
            strong = np.where(up, other, hit)
            demote[weak] = True
            target[weak] = strong
        if not demote.any():
            break
        parent = np.where(demote, target, parent)
        ridge &= ~demote

    while True:
        nxt = parent[parent]
        if np.array_equal(nxt, parent):
            break
        parent = nxt

    counts = np.bincount(parent[active], minlength=n)
    thickness = np.where(ridge, counts, 0).reshape(h, w)
    return EdgeMap(ridge.reshape(h, w), mag.copy(), grad.direction.copy(), thickness.astype(np.int64))
