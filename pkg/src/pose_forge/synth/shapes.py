"""Procedural textured shapes: displaced superellipsoids with region palettes."""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray
from scipy.spatial import ConvexHull
from scipy.spatial.transform import Rotation

from ..errors import DataError


@dataclass(frozen=True, eq=False)
class TexturedMesh:
    vertices: NDArray[np.float64]
    triangles: NDArray[np.int64]
    colors: NDArray[np.uint8]
    diameter: float = 0.0

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        c = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
        if len(c) != len(v):
            raise DataError("one color per vertex required")
        if len(f) and (f.min() < 0 or f.max() >= len(v)):
            raise DataError("triangle index out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)
        object.__setattr__(self, "colors", c)
        if not self.diameter:
            object.__setattr__(self, "diameter", mesh_diameter(v))
        if self.diameter <= 0:
            raise DataError("mesh diameter must be positive")

    def face_normals(self) -> NDArray[np.float64]:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        n = np.cross(b - a, c - a)
        return n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-18)

    def vertex_normals(self) -> NDArray[np.float64]:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        fn = np.cross(b - a, c - a)  # area weighted
        vn = np.zeros_like(self.vertices)
        for i in range(3):
            np.add.at(vn, self.triangles[:, i], fn)
        norm = np.linalg.norm(vn, axis=1, keepdims=True)
        vn = np.where(norm > 0, vn / np.maximum(norm, 1e-18), np.array([0.0, 0.0, 1.0]))
        return vn


def mesh_diameter(vertices: NDArray) -> float:
    v = np.asarray(vertices, dtype=np.float64)
    if len(v) < 2:
        return 0.0
    try:
        v = v[ConvexHull(v).vertices]
    except Exception:  # coplanar or tiny inputs; fall back to all points
        pass
    best = 0.0
    for start in range(0, len(v), 512):
        d = np.linalg.norm(v[start:start + 512, None, :] - v[None, :, :], axis=-1)
        best = max(best, float(d.max()))
    return best


@dataclass(frozen=True)
class ShapeParams:
    n_lat: int = 60
    n_lon: int = 120
    min_semi_axis: float = 0.035
    max_semi_axis: float = 0.06
    min_exponent: float = 0.75
    max_exponent: float = 1.3
    displacement: float = 0.03  # relative radial amplitude
    min_classes: int = 3
    regions: Optional[int] = None
    exponents: Optional[tuple[float, float]] = None
    semi_axes: Optional[tuple[float, float, float]] = None


def _spow(x: NDArray, e: float) -> NDArray:
    return np.sign(x) * np.abs(x) ** e


def _grid(n_lat: int, n_lon: int) -> tuple[NDArray, NDArray, NDArray]:
    """Latitude/longitude per vertex (poles included) and outward-wound triangles."""
    lat = np.linspace(-np.pi / 2, np.pi / 2, n_lat + 1)[1:-1]
    lon = np.linspace(-np.pi, np.pi, n_lon, endpoint=False)
    la, lo = np.meshgrid(lat, lon, indexing="ij")
    theta = np.concatenate([[-np.pi / 2], la.ravel(), [np.pi / 2]])
    phi = np.concatenate([[0.0], lo.ravel(), [0.0]])
    south, north = 0, len(theta) - 1

    def vid(i, j):
        return 1 + i * n_lon + (j % n_lon)

    tris = []
    for j in range(n_lon):
        tris.append((south, vid(0, j + 1), vid(0, j)))
        tris.append((north, vid(n_lat - 2, j), vid(n_lat - 2, j + 1)))
    for i in range(n_lat - 2):
        for j in range(n_lon):
            a, b = vid(i, j), vid(i, j + 1)
            c, d = vid(i + 1, j), vid(i + 1, j + 1)
            tris.append((a, b, d))
            tris.append((a, d, c))
    return theta, phi, np.array(tris, dtype=np.int64)


def _palette(rng: np.random.Generator, n: int) -> NDArray[np.uint8]:
    """Saturated colors with well-separated hues and mid-range brightness."""
    n_hues = max(n, 6)
    base = rng.random() / n_hues
    hues = (base + np.arange(n_hues) / n_hues) % 1.0
    hues = hues[rng.permutation(n_hues)[:n]]
    out = []
    for i, hue in enumerate(hues):
        sat = 0.65 + 0.3 * rng.random()
        val = 0.55 + 0.4 * rng.random()
        out.append([round(255 * c) for c in colorsys.hsv_to_rgb(hue, sat, val)])
    return np.array(out, dtype=np.uint8)


def _fibonacci_dirs(n: int, rng: np.random.Generator) -> NDArray:
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    r = np.sqrt(1 - z * z)
    phi = np.pi * (1 + 5 ** 0.5) * i
    d = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    # random rotation so region layouts differ between seeds
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    d = Rotation.from_quat(q).apply(d)
    return d + 0.25 * rng.normal(size=d.shape) / np.sqrt(n)


def _adjacent_color_pairs(tris: NDArray, region: NDArray) -> set[tuple[int, int]]:
    pairs = set()
    for a, b in ((0, 1), (1, 2), (2, 0)):
        ra, rb = region[tris[:, a]], region[tris[:, b]]
        diff = ra != rb
        for x, y in zip(ra[diff], rb[diff]):
            pairs.add((min(x, y), max(x, y)))
    return pairs


def generate_shape(seed: int, params: Optional[ShapeParams] = None) -> TexturedMesh:
    """Deterministic randomized superellipsoid with a Voronoi-region color texture."""
    params = params or ShapeParams()
    rng = np.random.default_rng(seed)
    if params.semi_axes is not None:
        axes = np.asarray(params.semi_axes, dtype=np.float64)
    else:
        axes = rng.uniform(params.min_semi_axis, params.max_semi_axis, size=3)
    if params.exponents is not None:
        e1, e2 = params.exponents
    else:
        e1, e2 = rng.uniform(params.min_exponent, params.max_exponent, size=2)
    theta, phi, tris = _grid(params.n_lat, params.n_lon)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(phi), np.sin(phi)
    base = np.stack([
        axes[0] * _spow(ct, e1) * _spow(cp, e2),
        axes[1] * _spow(ct, e1) * _spow(sp, e2),
        axes[2] * _spow(st, e1),
    ], axis=1)
    amp = params.displacement
    if amp > 0:
        f_lat, f_lon = rng.integers(2, 5), rng.integers(2, 5)
        ph1, ph2 = rng.uniform(0, 2 * np.pi, size=2)
        # vanishes at the poles so the surface stays closed and smooth there
        bump = amp * np.sin(f_lat * theta + ph1) * np.cos(f_lon * phi + ph2) * ct
        base = base * (1.0 + bump)[:, None]

    n_regions = params.regions or max(6, params.min_classes + 3)
    dirs_v = base / np.linalg.norm(base, axis=1, keepdims=True)
    for _ in range(32):
        seeds = _fibonacci_dirs(n_regions, rng)
        region = np.argmax(dirs_v @ seeds.T, axis=1)
        if len(np.unique(region)) == n_regions and \
                len(_adjacent_color_pairs(tris, region)) >= params.min_classes:
            break
    palette = _palette(rng, n_regions)
    return TexturedMesh(base, tris, palette[region])


def ellipsoid_residual(mesh: TexturedMesh, axes) -> float:
    """Max deviation of vertices from the analytic ellipsoid x²/a²+y²/b²+z²/c² = 1."""
    a = np.asarray(axes, dtype=np.float64)
    v = mesh.vertices
    return float(np.abs(np.sqrt(np.sum((v / a) ** 2, axis=1)) - 1.0).max())
