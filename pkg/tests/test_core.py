import numpy as np
import pytest
from hypothesis import given, settings
from scipy.spatial.transform import Rotation

from conftest import poses, random_pose
from pose_forge.core import (CameraIntrinsics, PointCloud, RgbdFrame, Se3Pose, lift, project, project_to_so3,
                             random_rotation, rot_z, rotation_angle, se3_compose)
from pose_forge.errors import DataError, NonPositiveDepth


def close_pose(a: Se3Pose, b: Se3Pose, tol: float = 1e-9) -> bool:
    return np.abs(a.matrix() - b.matrix()).max() < tol


# ---- Se3Pose -----------------------------------------------------------------------

def test_identity_compose():
    p = random_pose(np.random.default_rng(0))
    assert close_pose(se3_compose(Se3Pose.identity(), p), p)
    assert close_pose(se3_compose(p, Se3Pose.identity()), p)


def test_inverse_gives_identity():
    p = random_pose(np.random.default_rng(1))
    assert close_pose(p @ p.inverse(), Se3Pose.identity())
    assert close_pose(p.inverse() @ p, Se3Pose.identity())


def test_two_quarter_turns():
    q = Se3Pose(rot_z(90), np.zeros(3))
    assert np.allclose((q @ q).rotation, rot_z(180), atol=1e-12)
    assert abs(rotation_angle((q @ q).rotation, np.eye(3)) - np.pi) < 1e-9


def test_compose_applies_right_first():
    a = Se3Pose(rot_z(90), [1.0, 0, 0])
    b = Se3Pose(np.eye(3), [0, 2.0, 0])
    x = np.array([0.5, 0.0, 0.0])
    assert np.allclose((a @ b).apply(x), a.apply(b.apply(x)))


@settings(max_examples=200, deadline=None)
@given(poses, poses, poses)
def test_compose_associative(a, b, c):
    assert close_pose((a @ b) @ c, a @ (b @ c))


@settings(max_examples=200, deadline=None)
@given(poses, poses)
def test_compose_closed(a, b):
    r = (a @ b).rotation
    assert np.abs(r.T @ r - np.eye(3)).max() < 1e-9
    assert abs(np.linalg.det(r) - 1) < 1e-9
    inv = a.inverse().rotation
    assert np.abs(inv.T @ inv - np.eye(3)).max() < 1e-9


def test_pose_rejects_reflection_and_nan():
    with pytest.raises(DataError):
        Se3Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(DataError):
        Se3Pose(np.eye(3), [np.nan, 0, 0])
    with pytest.raises(DataError):
        Se3Pose.from_matrix(np.eye(3))


def test_pose_is_immutable():
    p = Se3Pose.identity()
    with pytest.raises(ValueError):
        p.translation[0] = 1.0


def test_project_to_so3():
    rng = np.random.default_rng(2)
    r = random_rotation(rng)
    noisy = r + 1e-3 * rng.normal(size=(3, 3))
    q = project_to_so3(noisy)
    assert np.abs(q.T @ q - np.eye(3)).max() < 1e-12
    assert np.linalg.det(q) > 0
    assert rotation_angle(q, r) < 1e-2


# ---- rotation_angle ----------------------------------------------------------------

def test_rotation_angle_trivial():
    r = random_rotation(np.random.default_rng(3))
    assert rotation_angle(r, r) == pytest.approx(0.0, abs=1e-7)
    assert rotation_angle(np.eye(3), rot_z(90)) == pytest.approx(np.pi / 2, abs=1e-12)


def quaternion_angle(a, b) -> float:
    qa, qb = Rotation.from_matrix(a).as_quat(), Rotation.from_matrix(b).as_quat()
    return 2.0 * np.arccos(min(1.0, abs(float(qa @ qb))))


def test_rotation_angle_matches_quaternion_oracle():
    rng = np.random.default_rng(4)
    for _ in range(500):
        a, b = random_rotation(rng), random_rotation(rng)
        assert rotation_angle(a, b) == pytest.approx(quaternion_angle(a, b), abs=1e-7)


def test_rotation_angle_symmetric_and_triangle():
    rng = np.random.default_rng(5)
    for _ in range(500):
        a, b, c = (random_rotation(rng) for _ in range(3))
        assert abs(rotation_angle(a, b) - rotation_angle(b, a)) < 1e-9
        assert rotation_angle(a, c) <= rotation_angle(a, b) + rotation_angle(b, c) + 1e-9


# ---- camera ------------------------------------------------------------------------

def test_project_examples(k640):
    assert np.allclose(project([0, 0, 1.0], k640), [320, 240])
    assert np.allclose(project([0.1, 0, 1.0], k640), [370, 240])


def test_project_lift_roundtrip(k640):
    rng = np.random.default_rng(6)
    z = rng.uniform(0.1, 10.0, 1000)
    p = np.stack([rng.uniform(-1, 1, 1000) * z, rng.uniform(-1, 1, 1000) * z, z], axis=1)
    uv = project(p, k640)
    back = lift(uv[:, 0], uv[:, 1], p[:, 2], k640)
    assert np.abs(back - p).max() < 1e-9


def test_nonpositive_depth(k640):
    with pytest.raises(NonPositiveDepth):
        project([0, 0, 0.0], k640)
    with pytest.raises(NonPositiveDepth):
        lift(1.0, 1.0, -0.5, k640)


def test_intrinsics_validation():
    with pytest.raises(DataError):
        CameraIntrinsics(0, 1, 1, 1, 10, 10)
    with pytest.raises(DataError):
        CameraIntrinsics(1, 1, 10, 1, 10, 10)
    k = CameraIntrinsics(1, 2, 3, 4, 10, 10)
    assert CameraIntrinsics.from_dict(k.to_dict()) == k


# ---- frames and clouds -------------------------------------------------------------

def _ramp_frame(k):
    h, w = k.height, k.width
    u = np.arange(w)
    depth = np.tile(500 + 2 * u, (h, 1)).astype(np.uint16)  # linear in u (mm)
    depth[:, :10] = 0
    return RgbdFrame(np.zeros((h, w, 3), np.uint8), depth, np.ones((h, w), bool), k)


def test_frame_validation(k):
    with pytest.raises(DataError):
        RgbdFrame(np.zeros((10, 10, 3), np.uint8), np.zeros((10, 10)), np.zeros((10, 10)), k)


def test_masked_points_skip_zero_depth(k):
    f = _ramp_frame(k)
    pts = f.masked_points()
    assert len(pts) == k.height * (k.width - 10)
    assert pts[:, 2].min() == pytest.approx(0.52)


def test_lift_subpixel_exact_on_plane(k):
    f = _ramp_frame(k)
    rng = np.random.default_rng(7)
    uv = np.stack([rng.uniform(20, 300, 200), rng.uniform(5, 230, 200)], axis=1)
    pts, ok = f.lift_subpixel(uv)
    assert ok.all()
    z = (500 + 2 * uv[:, 0]) / 1000.0
    assert np.abs(pts - lift(uv[:, 0], uv[:, 1], z, k)).max() < 1e-12


def test_lift_subpixel_depth_hole_falls_back(k):
    f = _ramp_frame(k)
    pts, ok = f.lift_subpixel(np.array([[9.5, 50.0], [2.0, 50.0]]))
    # (9.5) straddles the hole: nearest-pixel depth (u=10) is used; (2.0) has none
    assert ok.tolist() == [True, False]
    assert pts[0, 2] == pytest.approx(0.52)


def test_point_cloud_normals_checked():
    with pytest.raises(DataError):
        PointCloud(np.zeros((2, 3)), normals=np.ones((2, 3)))
    c = PointCloud(np.zeros((2, 3)), normals=np.tile([0, 0, 1.0], (2, 1)))
    moved = c.transformed(Se3Pose(rot_z(90), [1, 0, 0]))
    assert np.allclose(moved.points, [[1, 0, 0]] * 2)
    assert np.allclose(moved.normals, [[0, 0, 1]] * 2)
