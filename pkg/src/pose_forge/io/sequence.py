"""Frame directories: NNNNNN.ppm, NNNNNN_depth.pgm (mm), NNNNNN_mask.pgm, NNNNNN_pose.txt, intrinsics.json."""

from __future__ import annotations

import re
from pathlib import Path
from typing import Optional, Sequence

from ..core import CameraIntrinsics, RgbdFrame, Se3Pose
from ..errors import DataError, FormatError
from .netpbm import read_depth_pgm, read_mask_pgm, read_ppm, write_depth_pgm, write_mask_pgm, write_netpbm
from .poses import read_intrinsics, read_pose, write_intrinsics, write_pose

INTRINSICS = "intrinsics.json"
_COLOR = re.compile(r"^(\d{6})\.ppm$")


def frame_paths(directory, index: int) -> dict[str, Path]:
    d = Path(directory)
    stem = "%06d" % index
    return {"rgb": d / f"{stem}.ppm", "depth": d / f"{stem}_depth.pgm",
            "mask": d / f"{stem}_mask.pgm", "pose": d / f"{stem}_pose.txt"}


def write_frame(directory, index: int, frame: RgbdFrame, pose: Optional[Se3Pose] = None) -> None:
    p = frame_paths(directory, index)
    write_netpbm(p["rgb"], frame.rgb)
    write_depth_pgm(p["depth"], frame.depth)
    write_mask_pgm(p["mask"], frame.mask)
    if pose is not None:
        write_pose(p["pose"], pose)


def read_frame_files(rgb_path, depth_path, mask_path, k: CameraIntrinsics) -> RgbdFrame:
    for path in (rgb_path, depth_path, mask_path):
        if not Path(path).is_file():
            raise FormatError(f"missing frame file {path}")
    rgb = read_ppm(rgb_path)
    depth = read_depth_pgm(depth_path)
    mask = read_mask_pgm(mask_path)
    return RgbdFrame(rgb, depth, mask, k)


def read_frame(directory, index: int, k: Optional[CameraIntrinsics] = None) -> RgbdFrame:
    k = k or read_intrinsics(Path(directory) / INTRINSICS)
    p = frame_paths(directory, index)
    return read_frame_files(p["rgb"], p["depth"], p["mask"], k)


def frame_indices(directory) -> list[int]:
    d = Path(directory)
    if not d.is_dir():
        raise FormatError(f"not a directory: {d}")
    return sorted(int(m.group(1)) for m in (_COLOR.match(f.name) for f in d.iterdir()) if m)


def write_sequence(directory, frames: Sequence[RgbdFrame], poses: Optional[Sequence[Se3Pose]] = None) -> None:
    if not frames:
        raise DataError("empty sequence")
    if poses is not None and len(poses) != len(frames):
        raise DataError("frames and poses must pair up")
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_intrinsics(d / INTRINSICS, frames[0].intrinsics)
    for i, f in enumerate(frames):
        write_frame(d, i, f, None if poses is None else poses[i])


def read_sequence(directory, with_poses: bool = False) -> tuple[list[RgbdFrame], Optional[list[Se3Pose]]]:
    """All frames in index order; poses are required when ``with_poses``."""
    d = Path(directory)
    idx = frame_indices(d)
    if not idx:
        raise FormatError(f"no frames in {d}")
    if idx != list(range(idx[0], idx[0] + len(idx))):
        raise FormatError(f"frame numbering in {d} has gaps")
    k = read_intrinsics(d / INTRINSICS)
    frames = [read_frame(d, i, k) for i in idx]
    poses = None
    if with_poses:
        paths = [frame_paths(d, i)["pose"] for i in idx]
        for p in paths:
            if not p.is_file():
                raise FormatError(f"missing pose file {p}")
        poses = [read_pose(p) for p in paths]
    return frames, poses
