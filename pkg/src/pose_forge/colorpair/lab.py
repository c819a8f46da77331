"""sRGB -> CIELAB conversion and the two-stage bilateral prefilter."""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray

# sRGB primaries, D65 white
_RGB_TO_XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])
_DELTA = 6.0 / 29.0


def _srgb_to_linear(c: NDArray) -> NDArray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _f(t: NDArray) -> NDArray:
    return np.where(t > _DELTA ** 3, np.cbrt(t), t / (3 * _DELTA ** 2) + 4.0 / 29.0)


def rgb_to_lab(rgb: NDArray) -> NDArray[np.float64]:
    """8-bit sRGB image (..., 3) -> CIELAB (D65), L* in [0, 100]."""
    c = np.asarray(rgb, dtype=np.float64) / 255.0
    xyz = _srgb_to_linear(c) @ _RGB_TO_XYZ.T / _WHITE_D65
    fx, fy, fz = _f(xyz[..., 0]), _f(xyz[..., 1]), _f(xyz[..., 2])
    lab = np.stack([116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)], axis=-1)
    lab[..., 0] = np.clip(lab[..., 0], 0.0, 100.0)
    return lab


def _window_offsets(spatial_sigma: float) -> list[tuple[int, int, float]]:
    r = max(1, int(np.ceil(2.0 * spatial_sigma)))
    out = []
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            out.append((dy, dx, float(np.exp(-(dx * dx + dy * dy) / (2.0 * spatial_sigma ** 2)))))
    return out


def _joint_bilateral(values: NDArray, guide: NDArray, spatial_sigma: float,
                     range_sigma: float) -> NDArray:
    """Filter ``values`` (H, W, C) with range weights taken from ``guide`` (H, W, G)."""
    h, w = values.shape[:2]
    r = max(1, int(np.ceil(2.0 * spatial_sigma)))
    vp = np.pad(values, ((r, r), (r, r), (0, 0)), mode="reflect")
    gp = np.pad(guide, ((r, r), (r, r), (0, 0)), mode="reflect")
    acc = np.zeros_like(values)
    wsum = np.zeros((h, w))
    inv = 1.0 / (2.0 * range_sigma ** 2)
    for dy, dx, ws in _window_offsets(spatial_sigma):
        g = gp[r + dy:r + dy + h, r + dx:r + dx + w]
        d2 = np.sum((g - guide) ** 2, axis=-1)
        wt = ws * np.exp(-d2 * inv)
        acc += wt[..., None] * vp[r + dy:r + dy + h, r + dx:r + dx + w]
        wsum += wt
    return acc / wsum[..., None]


def bilateral_prefilter(img: NDArray, spatial_sigma: float = 1.5,
                        range_sigma: float = 8.0) -> NDArray[np.float64]:
    """Stage 1: bilateral on all Lab channels. Stage 2: a*/b* joint-filtered, guided by L*."""
    if spatial_sigma <= 0 or range_sigma <= 0:
        raise ValueError("sigmas must be positive")
    lab = np.asarray(img, dtype=np.float64)
    stage1 = _joint_bilateral(lab, lab, spatial_sigma, range_sigma)
    out = stage1.copy()
    out[..., 1:] = _joint_bilateral(stage1[..., 1:], stage1[..., :1], spatial_sigma, range_sigma)
    return out
