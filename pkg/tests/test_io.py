import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pose_forge.config import PipelineConfig, load_config
from pose_forge.core import CameraIntrinsics, RgbdFrame, Se3Pose
from pose_forge.errors import DataError, FormatError
from pose_forge.io import (decode_netpbm, decode_ply, encode_netpbm, encode_ply, format_pose, frame_indices,
                           parse_pose, read_frame, read_intrinsics, read_pose, read_ppm, read_sequence,
                           read_trajectory, write_intrinsics, write_pose, write_sequence, write_trajectory)

from conftest import poses

# ---- netpbm ------------------------------------------------------------------------

images = st.one_of(
    arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6))),
    arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3))),
    arrays(np.uint16, st.tuples(st.integers(1, 6), st.integers(1, 6))),
)


@settings(max_examples=60)
@given(images, st.booleans())
def test_netpbm_roundtrip(img, binary):
    got = decode_netpbm(encode_netpbm(img, binary))
    assert got.dtype == img.dtype and np.array_equal(got, img)


def test_netpbm_header_comments_and_plain():
    buf = b"P2\n# a comment\n3 1\n# more\n255\n0 7 255\n"
    assert decode_netpbm(buf).tolist() == [[0, 7, 255]]


@pytest.mark.parametrize("buf", [b"P7\n1 1\n255\n0", b"P2\n2 2\n255\n1 2 3", b"P5\n2 2\n255\n\x00",
                                 b"P2\n1 1\n10\n11", b"P2\n0 1\n255\n", b"P2\n1 x\n255\n0"])
def test_netpbm_errors(buf):
    with pytest.raises(FormatError):
        decode_netpbm(buf)


def test_netpbm_encode_errors():
    with pytest.raises(FormatError):
        encode_netpbm(np.zeros((2, 2), np.float32))
    with pytest.raises(FormatError):
        encode_netpbm(np.zeros((2, 2, 4), np.uint8))


def test_read_ppm_rejects_gray(tmp_path):
    (tmp_path / "g.pgm").write_bytes(encode_netpbm(np.zeros((2, 2), np.uint8)))
    with pytest.raises(FormatError):
        read_ppm(tmp_path / "g.pgm")
    with pytest.raises(FormatError, match="cannot read"):
        read_ppm(tmp_path / "missing.ppm")


# ---- PLY ---------------------------------------------------------------------------

def test_ply_roundtrip(mesh):
    buf = encode_ply(mesh.vertices, mesh.triangles, mesh.colors)
    got = decode_ply(buf)
    assert np.array_equal(got.vertices, mesh.vertices)
    assert np.array_equal(got.triangles, mesh.triangles)
    assert np.array_equal(got.colors, mesh.colors)
    assert encode_ply(got.vertices, got.triangles, got.colors) == buf


def test_ply_binary_and_quads():
    head = (b"ply\nformat binary_little_endian 1.0\nelement vertex 4\nproperty float x\nproperty float y\n"
            b"property float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n")
    verts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]], dtype="<f4")
    face = np.array([4], "u1").tobytes() + np.array([0, 1, 2, 3], "<i4").tobytes()
    got = decode_ply(head + verts.tobytes() + face)
    assert got.colors is None
    assert got.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]
    assert np.array_equal(got.vertices, verts.astype(np.float64))


@pytest.mark.parametrize("buf", [
    b"not a ply",
    b"ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n",
    b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\n"
    b"element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n3 0 1 2\n",
    b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n0\n",
])
def test_ply_errors(buf):
    with pytest.raises(FormatError):
        decode_ply(buf)


# ---- poses, trajectories, intrinsics -----------------------------------------------

@given(poses)
def test_pose_text_roundtrip(p):
    got = parse_pose(format_pose(p))
    assert np.array_equal(got.matrix(), p.matrix())


def test_pose_file_errors(tmp_path):
    with pytest.raises(FormatError):
        parse_pose("1 2 3")
    with pytest.raises(FormatError):
        parse_pose(" ".join(["1"] * 16))
    with pytest.raises(FormatError):
        parse_pose("1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 x")
    with pytest.raises(FormatError):
        read_pose(tmp_path / "none.txt")


def test_pose_and_trajectory_files(tmp_path):
    rng = np.random.default_rng(0)
    ps = [Se3Pose.from_rotvec(rng.normal(size=3), rng.normal(size=3)) for _ in range(5)]
    write_pose(tmp_path / "p.txt", ps[0])
    assert np.array_equal(read_pose(tmp_path / "p.txt").matrix(), ps[0].matrix())
    write_trajectory(tmp_path / "t.txt", [0, 5, 10, 15, 20], ps)
    frames, got = read_trajectory(tmp_path / "t.txt")
    assert frames == [0, 5, 10, 15, 20]
    assert all(np.array_equal(a.matrix(), b.matrix()) for a, b in zip(got, ps))
    (tmp_path / "bad.txt").write_text("0 1 2\n")
    with pytest.raises(FormatError):
        read_trajectory(tmp_path / "bad.txt")


def test_intrinsics_roundtrip(tmp_path, k640):
    write_intrinsics(tmp_path / "k.json", k640)
    assert read_intrinsics(tmp_path / "k.json") == k640
    (tmp_path / "bad.json").write_text("{\"fx\": 1}")
    with pytest.raises(FormatError):
        read_intrinsics(tmp_path / "bad.json")


# ---- frame directories -------------------------------------------------------------

def test_sequence_roundtrip(tmp_path, sequence):
    frames, script = sequence
    write_sequence(tmp_path, frames[:3], script.poses[:3])
    assert frame_indices(tmp_path) == [0, 1, 2]
    got, ps = read_sequence(tmp_path, with_poses=True)
    for a, b in zip(got, frames[:3]):
        assert np.array_equal(a.rgb, b.rgb) and np.array_equal(a.depth, b.depth)
        assert np.array_equal(a.mask, b.mask) and a.intrinsics == b.intrinsics
    assert all(np.array_equal(a.matrix(), b.matrix()) for a, b in zip(ps, script.poses[:3]))


def test_sequence_errors(tmp_path, sequence):
    frames, _ = sequence
    write_sequence(tmp_path, frames[:3])
    with pytest.raises(FormatError, match="pose"):
        read_sequence(tmp_path, with_poses=True)
    (tmp_path / "000001_depth.pgm").unlink()
    with pytest.raises(FormatError, match="000001_depth.pgm"):
        read_frame(tmp_path, 1)
    (tmp_path / "000001.ppm").unlink()
    with pytest.raises(FormatError, match="gaps"):
        read_sequence(tmp_path)
    with pytest.raises(DataError):
        write_sequence(tmp_path / "x", [])


def test_depth_full_range(tmp_path):
    k = CameraIntrinsics(10.0, 10.0, 1.0, 1.0, 3, 2)
    depth = np.array([[0, 1, 65535], [300, 4000, 12]], np.uint16)
    f = RgbdFrame(np.zeros((2, 3, 3), np.uint8), depth, depth > 0, k)
    write_sequence(tmp_path, [f])
    assert np.array_equal(read_frame(tmp_path, 0).depth, depth)


# ---- configuration -----------------------------------------------------------------

def test_config_roundtrip(tmp_path):
    cfg = PipelineConfig(seed=7, top_k=3, use_filter=False)
    cfg.save(tmp_path / "c.json")
    assert PipelineConfig.load(tmp_path / "c.json") == cfg
    assert json.loads((tmp_path / "c.json").read_text())["top_k"] == 3


def test_config_validation(tmp_path):
    with pytest.raises(DataError, match="unknown"):
        PipelineConfig.from_dict({"bogus": 1})
    with pytest.raises(DataError):
        PipelineConfig(top_k=0)
    with pytest.raises(DataError):
        PipelineConfig(flow_window=20)
    with pytest.raises(DataError):
        PipelineConfig(seed="3")
    with pytest.raises(DataError):
        PipelineConfig(fine_rotation_deg=45.0)
    (tmp_path / "bad.json").write_text("[1]")
    with pytest.raises(FormatError):
        PipelineConfig.load(tmp_path / "bad.json")


def test_seed_env_override(tmp_path):
    PipelineConfig(seed=1).save(tmp_path / "c.json")
    assert load_config(str(tmp_path / "c.json"), env={}).seed == 1
    assert load_config(str(tmp_path / "c.json"), env={"POSE_FORGE_SEED": "42"}).seed == 42
    with pytest.raises(DataError):
        load_config(None, env={"POSE_FORGE_SEED": "x"})


def test_config_maps_onto_modules():
    cfg = PipelineConfig(fine_rotation_deg=5.0, icp_max_iters=7, merge_threshold=0.9)
    assert cfg.estimate().fine_bins.rotation_deg == 5.0
    assert cfg.icp().max_iters_per_level == 7
    assert cfg.model().merge_threshold == 0.9
