import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pose_forge.core import Se3Pose, rotvec_to_matrix
from pose_forge.errors import DataError, LengthMismatch, ZeroMotion
from pose_forge.metrics import (PoseErrorRecord, add_auc, add_error, add_recall, adds_error,
                                adds_error_bruteforce, endpoint_error, normalized_motion_errors,
                                pose_error_record, read_records_csv, summarize, write_records_csv,
                                write_summary_json)

from conftest import poses, random_pose

# ---- pure-python oracles -----------------------------------------------------------


def _apply(pose: Se3Pose, p) -> list[float]:
    r, t = pose.rotation.tolist(), pose.translation.tolist()
    return [sum(r[i][j] * p[j] for j in range(3)) + t[i] for i in range(3)]


def oracle_add(est, gt, pts) -> float:
    return math.fsum(math.dist(_apply(est, p), _apply(gt, p)) for p in pts.tolist()) / len(pts)


def oracle_adds(est, gt, pts) -> float:
    g = [_apply(gt, p) for p in pts.tolist()]
    return math.fsum(min(math.dist(_apply(est, p), q) for q in g) for p in pts.tolist()) / len(pts)


def oracle_recall(errors, diameter) -> float:
    return sum(1 for e in errors if e < 0.1 * diameter) / len(errors)


def oracle_epe(a, b) -> float:
    return math.fsum(math.hypot(x[0] - y[0], x[1] - y[1]) for x, y in zip(a.tolist(), b.tolist())) / len(a)


def oracle_angle(r) -> float:
    c = (r[0][0] + r[1][1] + r[2][2] - 1.0) / 2.0
    return math.acos(max(-1.0, min(1.0, c)))


# ---- ADD / ADD-S -------------------------------------------------------------------

def test_add_trivial():
    pts = np.random.default_rng(0).normal(size=(50, 3))
    g = random_pose(np.random.default_rng(1))
    assert add_error(g, g, pts) == 0.0 and adds_error(g, g, pts) == 0.0
    shifted = Se3Pose(g.rotation, g.translation + [0.01, 0, 0])
    assert add_error(shifted, g, pts) == pytest.approx(0.01, abs=1e-15)


def test_metric_oracles_random_cases():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        n = int(rng.integers(1, 40))
        pts = rng.normal(0, 0.05, (n, 3))
        est, gt = random_pose(rng, 0.5), random_pose(rng, 0.5)
        add, adds = add_error(est, gt, pts), adds_error(est, gt, pts)
        assert abs(add - oracle_add(est, gt, pts)) < 1e-12
        assert abs(adds - oracle_adds(est, gt, pts)) < 1e-12
        assert abs(adds_error_bruteforce(est, gt, pts) - adds) < 1e-12
        assert adds <= add
        errs = rng.uniform(0, 0.03, n).tolist()
        assert add_recall(errs, 0.2) == oracle_recall(errs, 0.2)
        fa, fb = rng.normal(size=(n, 2)), rng.normal(size=(n, 2))
        assert abs(endpoint_error(fa, fb) - oracle_epe(fa, fb)) < 1e-12


def test_adds_symmetric_ring():
    th = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    ring = np.stack([0.05 * np.cos(th), 0.05 * np.sin(th), np.zeros(12)], axis=1)
    gt = Se3Pose(np.eye(3), [0, 0, 0.5])
    est = Se3Pose(rotvec_to_matrix([0, 0, np.radians(30)]), [0, 0, 0.5])
    assert adds_error(est, gt, ring) < 1e-12
    assert add_error(est, gt, ring) > 0.02


@settings(max_examples=50, deadline=None)
@given(poses, poses, poses)
def test_add_isometry_invariance(est, gt, iso):
    pts = np.random.default_rng(3).normal(0, 0.05, (30, 3))
    assert abs(add_error(iso @ est, iso @ gt, pts) - add_error(est, gt, pts)) < 1e-9


def test_metric_input_errors():
    g = Se3Pose.identity()
    with pytest.raises(DataError):
        add_error(g, g, np.zeros((0, 3)))
    with pytest.raises(DataError):
        add_recall([0.0], 0.0)
    with pytest.raises(LengthMismatch):
        endpoint_error(np.zeros((3, 2)), np.zeros((4, 2)))


# ---- recall / AUC ------------------------------------------------------------------

def test_recall_cases():
    assert add_recall([0.0] * 5, 0.1) == 1.0
    assert add_recall([0.1] * 5, 0.1) == 0.0
    # strict inequality: exactly 10% of the diameter is a miss
    assert add_recall([0.001, 0.099, 0.1, 0.2, 0.05], 1.0) == pytest.approx(3 / 5)
    assert add_recall([], 0.1) == 0.0


@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=1, max_size=30), st.floats(0.01, 5), st.floats(0.01, 5))
def test_recall_monotone_in_diameter(errs, d1, d2):
    lo, hi = sorted((d1, d2))
    assert add_recall(errs, lo) <= add_recall(errs, hi)


def test_auc_bounds():
    assert add_auc([0.0] * 4, 0.1) == 1.0
    assert add_auc([1.0] * 4, 0.1) == 0.0
    # uniform errors over [0, 0.01] -> area of a ramp is one half
    assert add_auc(np.linspace(0, 0.01, 10001), 0.1) == pytest.approx(0.5, abs=1e-3)


# ---- normalized motion errors ------------------------------------------------------

def test_normalized_motion_cases():
    gt = Se3Pose(rotvec_to_matrix([0, 0, np.radians(10)]), [0.01, 0, 0])
    assert normalized_motion_errors(gt, gt) == (0.0, 0.0)
    r, t = normalized_motion_errors(Se3Pose.identity(), gt)
    assert r == pytest.approx(1.0, abs=1e-12) and t == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ZeroMotion):
        normalized_motion_errors(gt, Se3Pose.identity())
    r, t = normalized_motion_errors(gt, Se3Pose(np.eye(3), [0.02, 0, 0]))
    assert r is None and t == pytest.approx(0.5)


def test_normalized_motion_oracle():
    rng = np.random.default_rng(4)
    for _ in range(200):
        est, gt = random_pose(rng, 0.05), random_pose(rng, 0.05)
        r, t = normalized_motion_errors(est, gt)
        rel = (est.rotation @ gt.rotation.T).tolist()
        assert abs(r - oracle_angle(rel) / oracle_angle(gt.rotation.tolist())) < 1e-9
        assert abs(t - math.dist(est.translation, gt.translation) / math.hypot(*gt.translation)) < 1e-12


def test_endpoint_cases():
    f = np.random.default_rng(5).normal(size=(20, 2))
    assert endpoint_error(f, f) == 0.0
    assert endpoint_error(f + [1.0, 0.0], f) == pytest.approx(1.0, abs=1e-12)


# ---- records and reports -----------------------------------------------------------

def test_record_invariants():
    with pytest.raises(DataError):
        PoseErrorRecord(0, 0.01, 0.02, 0.0, 0.0)
    with pytest.raises(DataError):
        PoseErrorRecord(0, -1.0, -1.0, 0.0, 0.0)
    rng = np.random.default_rng(6)
    pts = rng.normal(0, 0.05, (100, 3))
    for _ in range(100):
        rec = pose_error_record(0, random_pose(rng, 0.1), random_pose(rng, 0.1), pts)
        assert 0 <= rec.adds <= rec.add


def test_csv_and_summary_roundtrip(tmp_path):
    rng = np.random.default_rng(7)
    pts = rng.normal(0, 0.05, (50, 3))
    gt = random_pose(rng, 0.1)
    recs = [pose_error_record(i, Se3Pose(gt.rotation, gt.translation + rng.normal(0, 0.01, 3)), gt, pts)
            for i in range(10)]
    path = tmp_path / "errors.csv"
    write_records_csv(path, recs)
    assert read_records_csv(path) == recs
    assert path.read_text().splitlines()[0] == "frame,add,adds,rot_err,trans_err"
    summary = summarize(recs, 0.15)
    assert summary["add_recall"] == oracle_recall([r.add for r in recs], 0.15)
    write_summary_json(tmp_path / "s.json", summary)
    assert json.loads((tmp_path / "s.json").read_text()) == summary

