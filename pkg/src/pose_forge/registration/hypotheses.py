"""Pose hypotheses from semantic-triangle hash lookups, with a PPF fallback."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from ..core import Se3Pose
from ..errors import NoHypotheses
from .cloud import ClassifiedCloud
from .hashdb import TriangleHashDb, oriented_pairs, pack_ppf, thin_points
from .kabsch import kabsch_batch
from .triangles import pack_keys, quantize, select_semantic_triangles

SOURCE_TRIANGLE = "triangle"
SOURCE_PPF = "ppf"


@dataclass(frozen=True, eq=False)
class PoseHypothesis:
    pose: Se3Pose
    weight: float
    source: str = SOURCE_TRIANGLE
    feature_id: int = -1  # scene triangle (or scene point pair) that produced it

    def __post_init__(self) -> None:
        if not (self.weight > 0) or not np.isfinite(self.weight):
            raise ValueError("hypothesis weight must be positive and finite")


@dataclass(frozen=True)
class HypothesisParams:
    max_scene_triangles: int = 300
    max_per_key: int = 8
    probe: int = 1  # neighbor bins probed on each side/area dimension
    side_tolerance: Optional[float] = None  # default: one side step
    ppf_scene_points: int = 80
    ppf_max_per_key: int = 4
    ppf_lever: float = 0.02  # meters along normals for the PPF Kabsch anchors


def center_aligned_indices(m: int, k: int) -> NDArray[np.int64]:
    """k indices spread evenly over a sorted list of m, centered on its middle.

    index_i = floor((i + 1) * m / (k + 1) - 1/2); for m = 10, k = 3 this gives 2, 4, 7.
    """
    if k <= 0 or m <= 0:
        return np.zeros(0, np.int64)
    if m <= k:
        return np.arange(m, dtype=np.int64)
    i = np.arange(k, dtype=np.int64)
    return (2 * (i + 1) * m - (k + 1)) // (2 * (k + 1))


def _expand_ranges(lo: NDArray, hi: NDArray) -> tuple[NDArray, NDArray]:
    """Flatten [lo, hi) ranges into (owner, value) arrays in order."""
    lo = lo.reshape(-1)
    hi = hi.reshape(-1)
    cnt = np.maximum(hi - lo, 0)
    owner = np.repeat(np.arange(len(lo)), cnt)
    start = np.repeat(lo - np.concatenate([[0], np.cumsum(cnt)[:-1]]), cnt)
    return owner, start + np.arange(cnt.sum())


def _cap_per_owner(owner: NDArray, k: int) -> NDArray[np.bool_]:
    """Keep center-aligned samples of each owner's (already ordered) run."""
    keep = np.zeros(len(owner), dtype=bool)
    if len(owner) == 0:
        return keep
    starts = np.flatnonzero(np.r_[True, owner[1:] != owner[:-1]])
    ends = np.r_[starts[1:], len(owner)]
    for s, e in zip(starts, ends):
        keep[s + center_aligned_indices(e - s, k)] = True
    return keep


def _triangle_hypotheses(scene: ClassifiedCloud, db: TriangleHashDb, max_hypotheses: int,
                         hp: HypothesisParams) -> list[PoseHypothesis]:
    tp = db.params
    tris = select_semantic_triangles(scene, max_count=hp.max_scene_triangles, params=tp)
    if len(tris) == 0 or db.n_triangles == 0:
        return []
    q = quantize(tris, tp)
    r = range(-hp.probe, hp.probe + 1)
    offs = np.array([(0, 0, 0) + o for o in itertools.product(r, repeat=4)], dtype=np.int64)
    probes = q[:, None, :] + offs[None]
    ok = np.all(probes[..., 3:] >= 0, axis=-1)
    packed = pack_keys(probes.reshape(-1, 7)).reshape(probes.shape[:2])
    lo, hi = db.lookup_ranges(packed)
    hi = np.where(ok, hi, lo)
    owner, model_tri = _expand_ranges(lo, hi)
    owner //= len(offs)
    # ranges of different probes are disjoint; restore per-scene-triangle db order
    order = np.lexsort((model_tri, owner))
    owner, model_tri = owner[order], model_tri[order]

    tol = tp.side_step if hp.side_tolerance is None else hp.side_tolerance
    mv = db.points[db.triples[model_tri]]
    ms = np.stack([np.linalg.norm(mv[:, 1] - mv[:, 0], axis=1), np.linalg.norm(mv[:, 2] - mv[:, 1], axis=1),
                   np.linalg.norm(mv[:, 0] - mv[:, 2], axis=1)], axis=1)
    good = np.all(np.abs(ms - tris.sides[owner]) <= tol, axis=1)
    owner, model_tri, mv = owner[good], model_tri[good], mv[good]
    keep = _cap_per_owner(owner, hp.max_per_key)
    owner, model_tri, mv = owner[keep], model_tri[keep], mv[keep]
    if len(owner) == 0:
        return []
    sv = scene.points[tris.indices[owner]]
    rot, trans, valid = kabsch_batch(mv, sv)
    w = np.prod(scene.weights[tris.indices[owner]], axis=1) * \
        np.prod(db.point_weights[db.triples[model_tri]], axis=1)
    out = []
    for i in np.flatnonzero(valid & (w > 0))[:max_hypotheses]:
        out.append(PoseHypothesis(Se3Pose(rot[i], trans[i]), float(w[i]), SOURCE_TRIANGLE, int(owner[i])))
    return out


def _ppf_hypotheses(scene: ClassifiedCloud, db: TriangleHashDb, max_hypotheses: int,
                    hp: HypothesisParams) -> list[PoseHypothesis]:
    if scene.normals is None or db.n_ppf == 0:
        return []
    finite = np.flatnonzero(np.all(np.isfinite(scene.normals), axis=1))
    sel = finite[thin_points(scene.points[finite], db.ppf.spacing, hp.ppf_scene_points)]
    sp, sn = scene.points[sel], scene.normals[sel]
    pairs, sq = oriented_pairs(sp, sn, db.ppf)
    up = pairs[:, 0] < pairs[:, 1]
    pairs, sq = pairs[up], sq[up]
    if len(pairs) == 0:
        return []
    keys = pack_ppf(sq)
    lo = np.searchsorted(db.ppf_keys, keys, side="left")
    hi = np.searchsorted(db.ppf_keys, keys, side="right")
    owner, entry = _expand_ranges(lo, hi)
    keep = _cap_per_owner(owner, hp.ppf_max_per_key)
    owner, entry = owner[keep], entry[keep]
    if len(owner) == 0:
        return []
    lam = hp.ppf_lever
    mp = db.ppf_points[db.ppf_pairs[entry]]
    mn = db.ppf_normals[db.ppf_pairs[entry]]
    s_idx = pairs[owner]
    spp, snn = sp[s_idx], sn[s_idx]
    src = np.concatenate([mp, mp + lam * mn], axis=1)
    dst = np.concatenate([spp, spp + lam * snn], axis=1)
    rot, trans, valid = kabsch_batch(src, dst)
    out = []
    for i in np.flatnonzero(valid)[:max_hypotheses]:
        out.append(PoseHypothesis(Se3Pose(rot[i], trans[i]), 1.0, SOURCE_PPF, int(owner[i])))
    return out


def generate_hypotheses(scene: ClassifiedCloud, db: TriangleHashDb, max_hypotheses: int = 4000,
                        params: Optional[HypothesisParams] = None) -> list[PoseHypothesis]:
    """Model-to-camera pose hypotheses; PPF templates serve scenes with < 3 classes."""
    hp = params or HypothesisParams()
    hyps: list[PoseHypothesis] = []
    if len(scene.classes()) >= 3:
        hyps = _triangle_hypotheses(scene, db, max_hypotheses, hp)
    if not hyps:
        hyps = _ppf_hypotheses(scene, db, max_hypotheses, hp)
    if not hyps:
        raise NoHypotheses(f"no pose hypotheses (scene points={len(scene)}, "
                           f"classes={len(scene.classes())}, db triangles={db.n_triangles})")
    return hyps
