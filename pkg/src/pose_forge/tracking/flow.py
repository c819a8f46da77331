"""Sparse correspondences: pyramidal Lucas-Kanade at edge seeds, or an external flow field."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import cv2
import numpy as np
from numpy.typing import NDArray
from scipy import ndimage

from ..colorpair import extract_color_pairs
from ..core import RgbdFrame, Se3Pose, lift, project
from ..errors import DataError, FormatError, LengthMismatch, NoTrackablePoints

FLO2_MAGIC = b"FLO2"


@dataclass(frozen=True)
class FlowParams:
    levels: int = 4
    window: int = 21
    fb_threshold: float = 1.0  # pixels, forward-backward round trip
    max_iters: int = 30
    epsilon: float = 0.01
    max_seeds: int = 4000


@dataclass(frozen=True, eq=False)
class Matches:
    """Paired pixel positions (u, v): ``src`` in the previous frame, ``dst`` in the current."""

    src: NDArray[np.float64]
    dst: NDArray[np.float64]

    def __post_init__(self) -> None:
        s = np.asarray(self.src, dtype=np.float64).reshape(-1, 2)
        d = np.asarray(self.dst, dtype=np.float64).reshape(-1, 2)
        if len(s) != len(d):
            raise LengthMismatch("src and dst must pair up")
        object.__setattr__(self, "src", s)
        object.__setattr__(self, "dst", d)

    def __len__(self) -> int:
        return len(self.src)

    @property
    def flow(self) -> NDArray[np.float64]:
        return self.dst - self.src

    def subset(self, sel) -> "Matches":
        return Matches(self.src[sel], self.dst[sel])

    @classmethod
    def empty(cls) -> "Matches":
        return cls(np.zeros((0, 2)), np.zeros((0, 2)))


def _image(frame: RgbdFrame) -> NDArray[np.uint8]:
    # all three color channels: many texture borders differ in chroma, not in gray level
    return np.ascontiguousarray(frame.rgb)


def _thin(seeds: NDArray, max_seeds: int) -> NDArray:
    if len(seeds) > max_seeds:
        seeds = seeds[np.linspace(0, len(seeds) - 1, max_seeds).round().astype(np.int64)]
    return seeds


def lk_track(prev_img: NDArray, cur_img: NDArray, seeds: NDArray,
             params: Optional[FlowParams] = None) -> tuple[NDArray, NDArray[np.bool_]]:
    """Forward LK with a backward check on 8-bit gray or color images; returns positions and a survival mask."""
    params = params or FlowParams()
    if len(seeds) == 0:
        return np.zeros((0, 2)), np.zeros(0, bool)
    p0 = np.ascontiguousarray(seeds, dtype=np.float32).reshape(-1, 1, 2)
    crit = (cv2.TERM_CRITERIA_EPS | cv2.TERM_CRITERIA_COUNT, params.max_iters, params.epsilon)
    kw = dict(winSize=(params.window, params.window), maxLevel=params.levels - 1, criteria=crit)
    p1, st1, _ = cv2.calcOpticalFlowPyrLK(prev_img, cur_img, p0, None, **kw)
    p0r, st2, _ = cv2.calcOpticalFlowPyrLK(cur_img, prev_img, p1, None, **kw)
    fb = np.linalg.norm((p0r - p0).reshape(-1, 2), axis=1)
    h, w = cur_img.shape[:2]
    q = p1.reshape(-1, 2).astype(np.float64)
    inside = (q[:, 0] >= 0) & (q[:, 0] <= w - 1) & (q[:, 1] >= 0) & (q[:, 1] <= h - 1)
    ok = (st1.reshape(-1) == 1) & (st2.reshape(-1) == 1) & (fb < params.fb_threshold) & inside
    return q, ok


def edge_seeds(is_centerline: NDArray, mask: NDArray) -> NDArray[np.float64]:
    vs, us = np.nonzero(np.asarray(is_centerline, bool) & np.asarray(mask, bool))
    return np.stack([us, vs], axis=1).astype(np.float64)


def prediction_maps(prev: RgbdFrame, motion: Se3Pose) -> tuple[NDArray[np.float32], NDArray[np.float32]]:
    """Where each pixel of ``prev`` lands in the next frame under a camera-frame ``motion``.

    Pixels without depth take the displacement of the nearest pixel with depth.
    """
    h, w = prev.shape
    vv, uu = np.mgrid[0:h, 0:w]
    d = prev.depth_m()
    ok = d > 0
    if not ok.any():
        raise NoTrackablePoints("previous frame has no depth for motion compensation")
    q = project(motion.apply(lift(uu[ok], vv[ok], d[ok], prev.intrinsics)), prev.intrinsics)
    du = np.zeros((h, w))
    dv = np.zeros((h, w))
    du[ok] = q[:, 0] - uu[ok]
    dv[ok] = q[:, 1] - vv[ok]
    if not ok.all():
        _, (iv, iu) = ndimage.distance_transform_edt(~ok, return_indices=True)
        du, dv = du[iv, iu], dv[iv, iu]
    return (uu + du).astype(np.float32), (vv + dv).astype(np.float32)


def flow_correspondences(prev: RgbdFrame, cur: RgbdFrame, mask: NDArray,
                         params: Optional[FlowParams] = None,
                         seeds: Optional[NDArray] = None,
                         predicted: Optional[Se3Pose] = None) -> Matches:
    """LK flow at masked edge-centerline seeds, pruned by forward-backward consistency.

    Without explicit ``seeds`` the centerlines come from the color-pair edge
    extractor run on ``prev`` inside ``mask``. With a ``predicted`` motion the
    current image is first warped back by the flow that motion induces on the
    previous depth, so LK only measures the residual displacement.
    """
    params = params or FlowParams()
    if prev.shape != cur.shape:
        raise DataError("frames must share dimensions")
    mask = np.asarray(mask, dtype=bool)
    if seeds is None:
        seeds = edge_seeds(extract_color_pairs(prev.rgb, mask).edges.is_centerline, mask)
    seeds = _thin(np.asarray(seeds, dtype=np.float64).reshape(-1, 2), params.max_seeds)
    if len(seeds) == 0:
        raise NoTrackablePoints("no edge seeds inside the mask")
    if predicted is None:
        q, ok = lk_track(_image(prev), _image(cur), seeds, params)
    else:
        mx, my = prediction_maps(prev, predicted)
        warped = cv2.remap(_image(cur), mx, my, cv2.INTER_LINEAR, borderMode=cv2.BORDER_CONSTANT)
        # where either frame lacks surface the previous image is kept, so silhouettes
        # and background cannot pull the residual flow
        has = cv2.remap((cur.depth > 0).astype(np.uint8), mx, my, cv2.INTER_NEAREST,
                        borderMode=cv2.BORDER_CONSTANT) > 0
        keep_prev = ~(has & (prev.depth > 0))
        warped[keep_prev] = prev.rgb[keep_prev]
        r, ok = lk_track(_image(prev), warped, seeds, params)
        q = np.stack([ndimage.map_coordinates(mm, [r[:, 1], r[:, 0]], order=1, mode="nearest")
                      for mm in (mx, my)], axis=1).astype(np.float64)
        h, w = prev.shape
        ok &= (q[:, 0] >= 0) & (q[:, 0] <= w - 1) & (q[:, 1] >= 0) & (q[:, 1] <= h - 1)
    if not ok.any():
        raise NoTrackablePoints("every track failed the forward-backward check")
    return Matches(seeds[ok], q[ok])


# ---- external dense flow -----------------------------------------------------------

def sample_flow_field(field: NDArray, points: NDArray) -> NDArray[np.float64]:
    """Bilinear lookup of an (H, W, 2) flow field at (u, v) points."""
    f = np.asarray(field, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    coords = [pts[:, 1], pts[:, 0]]
    return np.stack([ndimage.map_coordinates(f[..., c], coords, order=1, mode="nearest")
                     for c in range(2)], axis=1)


def flow_from_field(field: NDArray, mask: NDArray, seeds: NDArray) -> Matches:
    """Correspondences from an externally computed dense flow at the given seeds."""
    seeds = np.asarray(seeds, dtype=np.float64).reshape(-1, 2)
    if len(seeds) == 0:
        raise NoTrackablePoints("no seeds for external flow")
    f = np.asarray(field)
    if f.shape[:2] != np.asarray(mask).shape or f.shape[2:] != (2,):
        raise DataError("flow field must be HxWx2 and match the mask")
    d = seeds + sample_flow_field(f, seeds)
    h, w = f.shape[:2]
    ok = np.all(np.isfinite(d), axis=1) & (d[:, 0] >= 0) & (d[:, 0] <= w - 1) & (d[:, 1] >= 0) & (d[:, 1] <= h - 1)
    if not ok.any():
        raise NoTrackablePoints("external flow moved every seed out of the image")
    return Matches(seeds[ok], d[ok])


def write_flo2(path, field: NDArray) -> None:
    """FLO2: magic, u32 width, u32 height, then row-major little-endian f32 (dx, dy)."""
    f = np.asarray(field, dtype="<f4")
    if f.ndim != 3 or f.shape[2] != 2:
        raise DataError("flow field must be HxWx2")
    h, w = f.shape[:2]
    Path(path).write_bytes(FLO2_MAGIC + struct.pack("<II", w, h) + f.tobytes())


def read_flo2(path) -> NDArray[np.float32]:
    buf = Path(path).read_bytes()
    if len(buf) < 12 or buf[:4] != FLO2_MAGIC:
        raise FormatError(f"{path}: not a FLO2 file")
    w, h = struct.unpack("<II", buf[4:12])
    body = buf[12:]
    if len(body) != w * h * 8:
        raise FormatError(f"{path}: expected {w * h * 8} payload bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w, 2).astype(np.float32)
