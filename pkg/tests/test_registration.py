import itertools

import numpy as np
import pytest

from conftest import random_pose
from pose_forge.core import RgbdFrame, Se3Pose, random_rotation, rot_z, rotation_angle
from pose_forge.errors import DataError, DegenerateConfiguration, EmptyMask, InsufficientClasses, NoValidDepth
from pose_forge.registration import (ClassifiedCloud, PoseHypothesis, SemanticTriangle, TriangleHashDb,
                                     TriangleParams, build_hash_db, center_aligned_indices, classify_scene,
                                     generate_hypotheses, hough_vote, kabsch, select_semantic_triangles,
                                     triangle_feature_key, weighted_sq_residual)
from pose_forge.registration.triangles import triangle_geometry

# ---- Kabsch ------------------------------------------------------------------------


def test_kabsch_exact():
    rng = np.random.default_rng(0)
    src = rng.normal(size=(20, 3))
    gt = Se3Pose(rot_z(90), [0.1, 0.0, 0.0])
    est = kabsch(src, gt.apply(src))
    assert np.abs(est.matrix() - gt.matrix()).max() < 1e-9
    same = kabsch(src, src)
    assert np.abs(same.matrix() - np.eye(4)).max() < 1e-9


def test_kabsch_is_least_squares_optimum():
    rng = np.random.default_rng(1)
    src = rng.normal(size=(30, 3))
    dst = random_pose(rng).apply(src) + rng.normal(0, 0.05, (30, 3))
    w = rng.uniform(0.1, 1.0, 30)
    best = kabsch(src, dst, w)
    e0 = weighted_sq_residual(best, src, dst, w)
    # random search around the optimum never improves it
    for _ in range(10_000):
        d = Se3Pose.from_rotvec(rng.normal(0, 0.02, 3), rng.normal(0, 0.02, 3))
        assert weighted_sq_residual(d @ best, src, dst, w) >= e0 - 1e-12
    # and the residual is stationary there
    h = 1e-6
    for i in range(6):
        xi = np.zeros(6)
        xi[i] = h
        plus = weighted_sq_residual(Se3Pose.from_rotvec(xi[:3], xi[3:]) @ best, src, dst, w)
        minus = weighted_sq_residual(Se3Pose.from_rotvec(-xi[:3], -xi[3:]) @ best, src, dst, w)
        assert abs((plus - minus) / (2 * h)) < 1e-6


def test_kabsch_degenerate():
    line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateConfiguration):
        kabsch(line, line)
    with pytest.raises(DegenerateConfiguration):
        kabsch(np.eye(3)[:2], np.eye(3)[:2])
    with pytest.raises(DataError):
        kabsch(np.eye(3), np.eye(3), weights=[1.0, -1.0, 1.0])


# ---- triangles ---------------------------------------------------------------------

def _cloud(points, ids):
    ids = np.asarray(ids)
    return ClassifiedCloud(np.asarray(points, float), ids, (ids >= 0).astype(float))


def _tri(p, classes):
    s, a = triangle_geometry(p[0], p[1], p[2])
    return SemanticTriangle(np.arange(3), np.asarray(classes), s, float(a), p.mean(axis=0))


def test_three_points_one_triangle():
    p = np.array([[0, 0, 0], [0.03, 0, 0], [0, 0.03, 0]], float)
    ts = select_semantic_triangles(_cloud(p, [2, 0, 1]), candidates=np.arange(3))
    assert len(ts) == 1
    assert ts.classes[0].tolist() == [0, 1, 2] and ts.indices[0].tolist() == [1, 2, 0]
    assert ts.area[0] == pytest.approx(0.5 * 0.03 * 0.03)


def test_collinear_triangle_rejected():
    p = np.array([[0, 0, 0], [0.02, 0, 0], [0.04, 0, 0]], float)
    assert len(select_semantic_triangles(_cloud(p, [0, 1, 2]), candidates=np.arange(3))) == 0
    with pytest.raises(InsufficientClasses):
        select_semantic_triangles(_cloud(p, [0, 1, 1]))


def _near_boundary(p, params):
    s, a = triangle_geometry(p[0], p[1], p[2])
    fs = s / params.side_step
    fa = a / params.area_step
    return np.any(np.abs(fs - np.rint(fs)) < 1e-6) or abs(fa - np.rint(fa)) < 1e-6


def test_key_invariance_random():
    rng = np.random.default_rng(2)
    params = TriangleParams()
    checked = 0
    for _ in range(1000):
        p = rng.uniform(-0.03, 0.03, (3, 3))
        cls = rng.choice(20, 3, replace=False)
        key = triangle_feature_key(_tri(p, cls), params)
        assert key[:3] == tuple(sorted(cls.tolist()))
        for perm in itertools.permutations(range(3)):
            perm = list(perm)
            assert triangle_feature_key(_tri(p[perm], cls[perm]), params) == key
        moved = random_pose(rng, 0.5).apply(p)
        if _near_boundary(p, params) or _near_boundary(moved, params):
            continue
        assert triangle_feature_key(_tri(moved, cls), params) == key
        checked += 1
    assert checked > 990


def test_key_changes_with_side_shift():
    p = np.array([[0, 0, 0], [0.031, 0, 0], [0, 0.022, 0]], float)
    t = _tri(p, [0, 1, 2])
    key = triangle_feature_key(t)
    step = TriangleParams().side_step
    shifted = SemanticTriangle(t.indices, t.classes, t.sides + [2 * step, 0, 0], t.area, t.centroid)
    assert triangle_feature_key(shifted) != key
    with pytest.raises(DataError):
        triangle_feature_key(_tri(p, [0, 0, 2]))


def test_top_k_matches_brute_force():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-0.04, 0.04, (100, 3))
    ids = rng.integers(0, 4, 100)
    cloud = _cloud(pts, ids)
    params = TriangleParams()
    got = select_semantic_triangles(cloud, max_count=25, params=params, candidates=np.arange(100))

    center = pts.mean(axis=0)
    r0 = np.linalg.norm(pts - center, axis=1).max()
    ref = []
    for i, j, k in itertools.combinations(range(100), 3):
        if len({ids[i], ids[j], ids[k]}) < 3:
            continue
        d = [np.linalg.norm(pts[a] - pts[b]) for a, b in ((i, j), (j, k), (k, i))]
        if min(d) < params.min_side or max(d) > params.max_side:
            continue
        area = 0.5 * np.linalg.norm(np.cross(pts[j] - pts[i], pts[k] - pts[i]))
        if area <= params.min_area:
            continue
        q = area * (1 + np.linalg.norm((pts[i] + pts[j] + pts[k]) / 3 - center) / r0)
        ref.append((-q, (i, j, k)))
    ref.sort()
    want = [t for _, t in ref[:25]]
    assert [tuple(sorted(t)) for t in got.indices.tolist()] == want


def test_center_aligned_indices():
    assert center_aligned_indices(10, 3).tolist() == [2, 4, 7]
    assert center_aligned_indices(2, 5).tolist() == [0, 1]
    for m in range(1, 40):
        for k in range(1, m + 1):
            idx = center_aligned_indices(m, k)
            assert len(idx) == k and np.all(np.diff(idx) > 0) and idx[0] >= 0 and idx[-1] < m
            assert abs((idx[0]) - (m - 1 - idx[-1])) <= 1


# ---- hash database -----------------------------------------------------------------

def _two_class(cloud: ClassifiedCloud) -> ClassifiedCloud:
    ids = np.where(cloud.class_ids >= 0, cloud.class_ids % 2, -1)
    return ClassifiedCloud(cloud.points, ids, cloud.weights, cloud.normals)


def test_hash_db_contents(model, hash_db):
    assert len(model[0].classes()) >= 3
    assert hash_db.n_triangles > 0 and hash_db.n_ppf > 0
    key = hash_db.qkeys[0]
    hit = hash_db.lookup(key)
    assert len(hit) >= 1 and hit.shape[1:] == (3, 3)
    assert len(hash_db.lookup([500, 501, 502, 0, 0, 0, 0])) == 0


def test_hash_db_two_classes(model):
    db = build_hash_db(_two_class(model[0]))
    assert db.n_triangles == 0 and db.n_ppf > 0
    no_normals = ClassifiedCloud(model[0].points, _two_class(model[0]).class_ids, model[0].weights)
    with pytest.raises(InsufficientClasses):
        build_hash_db(no_normals)


def test_hash_db_roundtrip(tmp_path, hash_db):
    hash_db.save(tmp_path / "m.trihash")
    back = TriangleHashDb.load(tmp_path / "m.trihash")
    assert (tmp_path / "m.trihash").read_bytes()[:8] == b"TRIHASH1"
    for name in ("points", "point_classes", "qkeys", "triples", "ppf_points", "ppf_qkeys", "ppf_pairs"):
        assert np.array_equal(getattr(back, name), getattr(hash_db, name)), name
    assert np.array_equal(back.model.points, hash_db.model.points)
    for key in hash_db.qkeys[::max(1, hash_db.n_triangles // 50)]:
        assert np.array_equal(back.lookup(key), hash_db.lookup(key))
    back.save(tmp_path / "again.trihash")
    assert (tmp_path / "again.trihash").read_bytes() == (tmp_path / "m.trihash").read_bytes()


def _visible_scene(model_cloud, pose):
    """Model points facing the camera, moved into the camera frame."""
    moved = model_cloud.transformed(pose)
    facing = np.einsum("ij,ij->i", moved.normals, moved.points) < 0
    return moved.subset(facing)


def test_two_class_scene_uses_ppf(model):
    db = build_hash_db(_two_class(model[0]))
    pose = Se3Pose(rot_z(20), [0.0, 0.0, 0.4])
    hyps = generate_hypotheses(_visible_scene(_two_class(model[0]), pose), db, 500)
    assert hyps and all(h.source == "ppf" for h in hyps)


def test_self_registration(model, hash_db):
    rng = np.random.default_rng(4)
    for _ in range(3):
        gt = Se3Pose(random_rotation(rng), [0.0, 0.0, 0.4])
        scene = _visible_scene(model[0], gt)
        hyps = generate_hypotheses(scene, hash_db)
        assert any(h.source == "triangle" for h in hyps)
        rot = np.array([np.degrees(rotation_angle(h.pose.rotation, gt.rotation)) for h in hyps])
        trans = np.array([np.linalg.norm(h.pose.translation - gt.translation) for h in hyps])
        assert np.any((rot < 1.0) & (trans < 1e-3))
        # the voted pose lands within one fine bin
        pose, _ = hough_vote(hyps, top_k=1)[0]
        assert np.degrees(rotation_angle(pose.rotation, gt.rotation)) < 7.5
        assert np.linalg.norm(pose.translation - gt.translation) < 0.01


def test_hypotheses_deterministic(model, hash_db):
    scene = _visible_scene(model[0], Se3Pose(rot_z(30), [0.0, 0.0, 0.4]))
    one, two = generate_hypotheses(scene, hash_db), generate_hypotheses(scene, hash_db)
    assert len(one) == len(two)
    assert all(np.array_equal(a.pose.matrix(), b.pose.matrix()) and a.weight == b.weight
               and a.feature_id == b.feature_id for a, b in zip(one, two))


# ---- voting ------------------------------------------------------------------------

def _around(pose, n, rng, deg=1.0, mm=3.0, start=0):
    """Hypotheses scattered about ``pose`` in the model frame."""
    out = []
    for i in range(n):
        d = Se3Pose.from_rotvec(np.radians(deg) * rng.normal(size=3) / np.sqrt(3), rng.normal(0, mm / 1e3, 3))
        out.append(PoseHypothesis(pose @ d, 1.0, feature_id=start + i))
    return out


def _random_hyps(rng, n, start):
    return [PoseHypothesis(Se3Pose(random_rotation(rng), rng.uniform(-0.1, 0.1, 3) + [0, 0, 0.4]),
                           1.0, feature_id=start + i) for i in range(n)]


def _within_fine_bin(p, q):
    return (np.degrees(rotation_angle(p.rotation, q.rotation)) < 7.5
            and np.linalg.norm(p.translation - q.translation) < 0.01)


def test_vote_identical_poses():
    p = random_pose(np.random.default_rng(5), 0.2)
    hyps = [PoseHypothesis(p, 1.0, feature_id=i) for i in range(40)]
    (best, score), = hough_vote(hyps, top_k=1)
    assert np.abs(best.matrix() - p.matrix()).max() < 1e-9
    assert score == pytest.approx(40.0)


def test_vote_majority_monte_carlo():
    rng = np.random.default_rng(6)
    hits = 0
    for _ in range(100):
        gt = Se3Pose(random_rotation(rng), rng.uniform(-0.05, 0.05, 3) + [0, 0, 0.4])
        hyps = _around(gt, 70, rng) + _random_hyps(rng, 30, 100)
        rng.shuffle(hyps)
        best, _ = hough_vote(hyps, top_k=1)[0]
        hits += _within_fine_bin(best, gt)
    assert hits >= 95


def test_vote_bimodal():
    rng = np.random.default_rng(7)
    a = Se3Pose(random_rotation(rng), [0, 0, 0.4])
    b = Se3Pose(random_rotation(rng), [0.05, 0, 0.5])
    out = hough_vote(_around(a, 50, rng) + _around(b, 50, rng, start=50), top_k=2)
    assert len(out) == 2
    found = [any(_within_fine_bin(p, want) for p, _ in out) for want in (a, b)]
    assert all(found)


def test_vote_caps_repeated_feature():
    rng = np.random.default_rng(8)
    moved = 0
    for _ in range(20):
        gt = Se3Pose(random_rotation(rng), [0, 0, 0.4])
        hyps = _around(gt, 70, rng) + _random_hyps(rng, 30, 100)
        base, _ = hough_vote(hyps, top_k=1)[0]
        spam = hyps[-1]
        dup = hyps + [PoseHypothesis(spam.pose, spam.weight, feature_id=spam.feature_id) for _ in range(100)]
        best, _ = hough_vote(dup, top_k=1)[0]
        moved += not _within_fine_bin(best, base)
    assert moved == 0
    # a single feature spread over a tight cluster still loses to a real mode
    a = Se3Pose(random_rotation(rng), [0, 0, 0.4])
    b = Se3Pose(random_rotation(rng), [0.05, 0, 0.5])
    spam = [PoseHypothesis(h.pose, 1.0, feature_id=999) for h in _around(b, 100, rng, deg=0.1, mm=0.5)]
    best, _ = hough_vote(_around(a, 20, rng) + spam, top_k=1)[0]
    assert _within_fine_bin(best, a)


def test_vote_deterministic():
    rng = np.random.default_rng(9)
    hyps = _around(random_pose(rng, 0.1), 60, rng, deg=5, mm=10)
    one = hough_vote(hyps, top_k=3)
    two = hough_vote(list(hyps), top_k=3)
    assert len(one) == len(two)
    for (p, s), (q, t) in zip(one, two):
        assert np.array_equal(p.matrix(), q.matrix()) and s == t


# ---- scene classification ----------------------------------------------------------

def test_classify_scene(model, sequence):
    frames, _ = sequence
    scene = classify_scene(frames[0], model[1])
    assert len(scene.classes()) >= 3
    assert np.all(scene.points[:, 2] > 0) and scene.normals is not None


def test_classify_scene_black_object(model, sequence):
    f = sequence[0][0]
    black = RgbdFrame(np.zeros_like(f.rgb), f.depth, f.mask, f.intrinsics)
    scene = classify_scene(black, model[1])
    assert len(scene.classified()) == 0


def test_classify_scene_depth_hole(model, sequence):
    f = sequence[0][0]
    depth = f.depth.copy()
    vs, us = np.nonzero(f.mask)
    hole = np.zeros_like(f.mask)
    hole[:, : int(np.median(us))] = True
    depth[hole] = 0
    scene = classify_scene(RgbdFrame(f.rgb, depth, f.mask, f.intrinsics), model[1])
    uv = scene.points[:, :2] / scene.points[:, 2:] * f.intrinsics.fx + [f.intrinsics.cx, f.intrinsics.cy]
    assert len(scene) > 0 and np.all(uv[:, 0] >= int(np.median(us)) - 0.5)


def test_classify_scene_errors(model, sequence):
    f = sequence[0][0]
    with pytest.raises(EmptyMask):
        classify_scene(RgbdFrame(f.rgb, f.depth, np.zeros_like(f.mask), f.intrinsics), model[1])
    with pytest.raises(NoValidDepth):
        classify_scene(RgbdFrame(f.rgb, np.zeros_like(f.depth), f.mask, f.intrinsics), model[1])
