"""Vectorized z-buffer rasterizer with Lambertian shading."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from ..core import CameraIntrinsics, RgbdFrame, Se3Pose
from ..errors import ObjectBehindCamera
from .shapes import TexturedMesh

_NEAR = 1e-3
_MAX_BATCH_PIXELS = 2_000_000


@dataclass(frozen=True)
class Light:
    """Directional light in camera coordinates (vector pointing toward the light)."""

    direction: tuple[float, float, float] = (-0.3, -0.5, -1.0)
    intensity: float = 1.0
    ambient: float = 0.4

    def unit(self) -> NDArray[np.float64]:
        d = np.asarray(self.direction, dtype=np.float64)
        return d / np.linalg.norm(d)


@dataclass(frozen=True, eq=False)
class Raster:
    """Per-pixel rasterization result; ``tri`` is -1 where nothing was hit."""

    depth: NDArray[np.float64]  # meters, 0 where empty
    tri: NDArray[np.int64]
    bary: NDArray[np.float64]  # perspective-correct barycentrics (H, W, 3)


def rasterize(vertices_cam: NDArray, triangles: NDArray, k: CameraIntrinsics) -> Raster:
    """Z-buffer rasterization sampling at integer pixel centers."""
    h, w = k.height, k.width
    depth = np.zeros((h, w))
    tri_img = np.full((h, w), -1, dtype=np.int64)
    bary_img = np.zeros((h, w, 3))
    v = np.asarray(vertices_cam, dtype=np.float64)
    f = np.asarray(triangles, dtype=np.int64)
    if len(f) == 0:
        return Raster(depth, tri_img, bary_img)
    if np.any(v[np.unique(f), 2] <= _NEAR):
        raise ObjectBehindCamera("mesh vertices at or behind the camera plane")
    u = k.fx * v[:, 0] / v[:, 2] + k.cx
    vv = k.fy * v[:, 1] / v[:, 2] + k.cy
    tu, tv, tz = u[f], vv[f], v[f, 2]

    umin = np.maximum(np.ceil(tu.min(axis=1)), 0).astype(np.int64)
    umax = np.minimum(np.floor(tu.max(axis=1)), w - 1).astype(np.int64)
    vmin = np.maximum(np.ceil(tv.min(axis=1)), 0).astype(np.int64)
    vmax = np.minimum(np.floor(tv.max(axis=1)), h - 1).astype(np.int64)
    bw, bh = umax - umin + 1, vmax - vmin + 1
    live = (bw > 0) & (bh > 0)
    area = (tu[:, 1] - tu[:, 0]) * (tv[:, 2] - tv[:, 0]) - (tu[:, 2] - tu[:, 0]) * (tv[:, 1] - tv[:, 0])
    live &= np.abs(area) > 1e-12

    pix_all, z_all, t_all, b_all = [], [], [], []
    ids = np.nonzero(live)[0]
    # bucket by bounding-box size so each batch pads to a small grid
    size_key = np.maximum(bw[ids], bh[ids])
    bucket = np.ceil(np.log2(np.maximum(size_key, 1))).astype(np.int64)
    for b in np.unique(bucket):
        sel = ids[bucket == b]
        side = int(size_key[bucket == b].max())
        per_tri = side * side
        step = max(1, _MAX_BATCH_PIXELS // per_tri)
        for s0 in range(0, len(sel), step):
            t = sel[s0:s0 + step]
            oy, ox = np.divmod(np.arange(per_tri), side)
            px = umin[t, None] + ox[None, :]
            py = vmin[t, None] + oy[None, :]
            inb = (px <= umax[t, None]) & (py <= vmax[t, None])
            x0, x1, x2 = tu[t, 0:1], tu[t, 1:2], tu[t, 2:3]
            y0, y1, y2 = tv[t, 0:1], tv[t, 1:2], tv[t, 2:3]
            ar = area[t, None]
            w0 = ((x1 - px) * (y2 - py) - (x2 - px) * (y1 - py)) / ar
            w1 = ((x2 - px) * (y0 - py) - (x0 - px) * (y2 - py)) / ar
            w2 = 1.0 - w0 - w1
            inside = inb & (w0 >= -1e-9) & (w1 >= -1e-9) & (w2 >= -1e-9)
            if not inside.any():
                continue
            r, c = np.nonzero(inside)
            tt = t[r]
            sw = np.stack([w0[r, c], w1[r, c], w2[r, c]], axis=1)
            invz = sw / tz[tt]
            z = 1.0 / invz.sum(axis=1)
            pix_all.append(py[r, c] * w + px[r, c])
            z_all.append(z)
            t_all.append(tt)
            b_all.append(invz * z[:, None])
    if not pix_all:
        return Raster(depth, tri_img, bary_img)
    pix = np.concatenate(pix_all)
    z = np.concatenate(z_all)
    tt = np.concatenate(t_all)
    bb = np.concatenate(b_all)
    order = np.lexsort((tt, z, pix))
    pix, z, tt, bb = pix[order], z[order], tt[order], bb[order]
    first = np.ones(len(pix), dtype=bool)
    first[1:] = pix[1:] != pix[:-1]
    pix, z, tt, bb = pix[first], z[first], tt[first], bb[first]
    depth.ravel()[pix] = z
    tri_img.ravel()[pix] = tt
    bary_img.reshape(-1, 3)[pix] = bb
    return Raster(depth, tri_img, bary_img)


def render_rgbd(mesh: TexturedMesh, pose: Se3Pose, k: CameraIntrinsics,
                light: Optional[Light] = None,
                depth_noise_mm: float = 0.0, dropout: float = 0.0,
                rng: Optional[np.random.Generator] = None) -> RgbdFrame:
    """Render color, depth (mm) and coverage mask of ``mesh`` placed at ``pose``."""
    light = light or Light()
    vc = pose.apply(mesh.vertices)
    ras = rasterize(vc, mesh.triangles, k)
    hit = ras.tri >= 0
    rgb = np.zeros((k.height, k.width, 3), dtype=np.uint8)
    depth_mm = np.zeros((k.height, k.width), dtype=np.uint16)
    if hit.any():
        tri = mesh.triangles[ras.tri[hit]]
        b = ras.bary[hit]
        albedo = np.einsum("nk,nkc->nc", b, mesh.colors[tri].astype(np.float64))
        normals = (mesh.vertex_normals() @ pose.rotation.T)[tri]
        n = np.einsum("nk,nkc->nc", b, normals)
        n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-12)
        lam = np.maximum(n @ light.unit(), 0.0)
        shade = light.intensity * (light.ambient + (1.0 - light.ambient) * lam)
        rgb[hit] = np.clip(np.rint(albedo * shade[:, None]), 0, 255).astype(np.uint8)
        z_mm = ras.depth[hit] * 1000.0
        if depth_noise_mm > 0 or dropout > 0:
            rng = rng if rng is not None else np.random.default_rng(0)
            if depth_noise_mm > 0:
                z_mm = z_mm + rng.normal(0.0, depth_noise_mm, size=z_mm.shape)
        dm = np.clip(np.rint(z_mm), 0, 65535).astype(np.uint16)
        if dropout > 0:
            dm[rng.random(len(dm)) < dropout] = 0
        depth_mm[hit] = dm
    return RgbdFrame(rgb, depth_mm, hit, k)


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=500.0, fy=500.0, cx=160.0, cy=120.0, width=320, height=240)
