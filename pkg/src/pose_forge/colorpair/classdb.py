"""Reference color-pair classes: greedy leader clustering, classification, JSON I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ..errors import DataError, FormatError
from .features import (ColorPair, PairArray, _as_arrays, chroma_similarity_matrix,
                       similarity_matrix)

CLASSDB_VERSION = 1
_MEDOID_MAX_MEMBERS = 1500


@dataclass(frozen=True, eq=False)
class ClassDb:
    classes: list[tuple[int, list[ColorPair]]]
    similarity_threshold: float = 0.85
    lightness_weight: float = 0.3

    def __post_init__(self) -> None:
        if not (0 < self.similarity_threshold < 1):
            raise DataError("similarity_threshold must lie in (0, 1)")
        if not (0 < self.lightness_weight <= 1):
            raise DataError("lightness_weight must lie in (0, 1]")
        ids = [cid for cid, _ in self.classes]
        if ids != list(range(len(ids))):
            raise DataError("class ids must be dense from 0")

    def __len__(self) -> int:
        return len(self.classes)

    def prototype_arrays(self) -> tuple[NDArray, NDArray, NDArray]:
        """Flattened prototypes: (c1, c2, owning class id)."""
        c1, c2, owner = [], [], []
        for cid, protos in self.classes:
            for p in protos:
                c1.append(p.c1)
                c2.append(p.c2)
                owner.append(cid)
        return np.array(c1).reshape(-1, 3), np.array(c2).reshape(-1, 3), np.array(owner, dtype=np.int64)

    def to_json(self) -> dict:
        return {
            "version": CLASSDB_VERSION,
            "lightness_weight": self.lightness_weight,
            "threshold": self.similarity_threshold,
            "classes": [
                {"id": cid, "prototypes": [{"c1": p.c1.tolist(), "c2": p.c2.tolist()} for p in protos]}
                for cid, protos in self.classes
            ],
        }

    @classmethod
    def from_json(cls, d: dict) -> "ClassDb":
        if d.get("version") != CLASSDB_VERSION:
            raise FormatError(f"unsupported ClassDb version {d.get('version')!r}")
        classes = [
            (int(c["id"]), [ColorPair(np.array(p["c1"], float), np.array(p["c2"], float))
                            for p in c["prototypes"]])
            for c in d["classes"]
        ]
        return cls(classes, float(d["threshold"]), float(d["lightness_weight"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "ClassDb":
        try:
            return cls.from_json(json.loads(Path(path).read_text()))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise FormatError(f"malformed ClassDb file {path}: {exc}") from exc


def _medoid(c1: NDArray, c2: NDArray, lightness_weight: float) -> int:
    n = len(c1)
    if n <= 2:
        return 0
    sel = np.arange(n)
    if n > _MEDOID_MAX_MEMBERS:
        sel = np.linspace(0, n - 1, _MEDOID_MAX_MEMBERS).round().astype(np.int64)
    totals = np.zeros(len(sel))
    for start in range(0, len(sel), 256):
        chunk = sel[start:start + 256]
        totals[start:start + 256] = similarity_matrix(c1[chunk], c2[chunk], c1[sel], c2[sel],
                                                      lightness_weight).sum(axis=1)
    return int(sel[int(np.argmax(totals))])


def cluster_pairs(c1: NDArray, c2: NDArray, threshold: float, lightness_weight: float) -> NDArray:
    """Greedy leader assignment; returns the leader-class label for each pair."""
    labels = np.empty(len(c1), dtype=np.int64)
    lead1 = np.empty((len(c1), 3))
    lead2 = np.empty((len(c1), 3))
    n_lead = 0
    for i in range(len(c1)):
        if n_lead:
            s = similarity_matrix(c1[i:i + 1], c2[i:i + 1], lead1[:n_lead], lead2[:n_lead],
                                  lightness_weight)[0]
            hit = np.flatnonzero(s >= threshold)
            if len(hit):
                labels[i] = hit[0]
                continue
        labels[i] = n_lead
        lead1[n_lead] = c1[i]
        lead2[n_lead] = c2[i]
        n_lead += 1
    return labels


def _merge_groups(c1: NDArray, c2: NDArray, threshold: float, lightness_weight: float) -> list[list[int]]:
    """Single-linkage grouping of medoids by chroma-only similarity (luminance ratio ignored)."""
    s = chroma_similarity_matrix(c1, c2, c1, c2, lightness_weight)
    _, labels = connected_components(csr_matrix(s >= threshold), directed=False)
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    return list(groups.values())


def build_class_db(reference_pairs, threshold: float = 0.85, lightness_weight: float = 0.3,
                   min_members: int = 1, merge_threshold: float | None = None,
                   classify_threshold: float | None = None) -> ClassDb:
    """Leader clustering in input order, then one medoid refinement per cluster.

    With a ``merge_threshold``, clusters whose medoids agree in chroma
    (D1*D2 >= merge_threshold) become one class holding several prototypes;
    shading splits one physical border into clusters that differ only in
    luminance ratio, and this folds them back together. Classes whose total
    membership is below ``min_members`` are then discarded.
    ``classify_threshold`` (default: ``threshold``) is stored as the db's
    acceptance threshold for classify_pairs.
    """
    c1, c2 = _as_arrays(reference_pairs)
    if len(c1) == 0:
        raise DataError("build_class_db needs at least one pair")
    labels = cluster_pairs(c1, c2, threshold, lightness_weight)
    sizes = np.bincount(labels)
    medoids = np.empty(len(sizes), dtype=np.int64)
    for lab in range(len(sizes)):
        members = np.nonzero(labels == lab)[0]
        medoids[lab] = members[_medoid(c1[members], c2[members], lightness_weight)]
    m1, m2 = c1[medoids], c2[medoids]
    if merge_threshold is None:
        groups = [[i] for i in range(len(medoids))]
    else:
        groups = _merge_groups(m1, m2, merge_threshold, lightness_weight)
    groups = [g for g in groups if sizes[g].sum() >= min_members]
    if not groups:
        raise DataError("no class reached min_members")
    classes = [(cid, [ColorPair(m1[i], m2[i]) for i in g]) for cid, g in enumerate(groups)]
    accept = threshold if classify_threshold is None else classify_threshold
    return ClassDb(classes, accept, lightness_weight)


def classify_pairs(pairs, db: ClassDb) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
    """Best class per pair and its score; (-1, 0.0) below the db threshold."""
    if len(db) == 0:
        raise DataError("empty ClassDb")
    c1, c2 = _as_arrays(pairs)
    if len(c1) == 0:
        return np.zeros(0, np.int64), np.zeros(0)
    p1, p2, owner = db.prototype_arrays()
    n_cls = len(db)
    ids = np.empty(len(c1), dtype=np.int64)
    weights = np.empty(len(c1))
    for start in range(0, len(c1), 2048):
        s = similarity_matrix(c1[start:start + 2048], c2[start:start + 2048], p1, p2, db.lightness_weight)
        per_class = np.full((len(s), n_cls), -np.inf)
        for j, cid in enumerate(owner):
            per_class[:, cid] = np.maximum(per_class[:, cid], s[:, j])
        best = np.argmax(per_class, axis=1)
        score = per_class[np.arange(len(s)), best]
        ok = score >= db.similarity_threshold
        ids[start:start + 2048] = np.where(ok, best, -1)
        weights[start:start + 2048] = np.where(ok, score, 0.0)
    return ids, weights


def classify_pair_list(pairs, db: ClassDb) -> list[tuple[int, float]]:
    ids, w = classify_pairs(pairs, db)
    return list(zip(ids.tolist(), w.tolist()))


__all__ = ["ClassDb", "build_class_db", "classify_pairs", "classify_pair_list", "PairArray"]
