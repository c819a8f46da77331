"""Pose text (4x4 row-major, %.17g), trajectories and camera intrinsics JSON."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from ..core import CameraIntrinsics, Se3Pose
from ..errors import DataError, FormatError


def format_pose(pose: Se3Pose) -> str:
    return "".join(" ".join("%.17g" % x for x in row) + "\n" for row in pose.matrix())


def parse_pose(text: str, where: str = "pose") -> Se3Pose:
    try:
        vals = [float(x) for x in text.split()]
    except ValueError as e:
        raise FormatError(f"{where}: non-numeric pose entry") from e
    if len(vals) != 16:
        raise FormatError(f"{where}: expected 16 values, got {len(vals)}")
    m = np.array(vals).reshape(4, 4)
    if not np.allclose(m[3], [0, 0, 0, 1]):
        raise FormatError(f"{where}: last row must be 0 0 0 1")
    try:
        return Se3Pose.from_matrix(m)
    except DataError as e:
        raise FormatError(f"{where}: {e}") from e


def write_pose(path, pose: Se3Pose) -> None:
    Path(path).write_text(format_pose(pose))


def read_pose(path) -> Se3Pose:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise FormatError(f"cannot read {p}: {e.strerror}") from e
    return parse_pose(text, str(p))


def write_trajectory(path, frames: Sequence[int], poses: Sequence[Se3Pose]) -> None:
    """One line per pose: frame index then the 16 row-major matrix entries."""
    if len(frames) != len(poses):
        raise DataError("frames and poses must pair up")
    lines = ["%d " % f + " ".join("%.17g" % x for x in p.matrix().ravel()) for f, p in zip(frames, poses)]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_trajectory(path) -> tuple[list[int], list[Se3Pose]]:
    frames, poses = [], []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        tok = line.split()
        if len(tok) != 17:
            raise FormatError(f"{path}:{n}: expected 17 fields, got {len(tok)}")
        frames.append(int(tok[0]))
        poses.append(parse_pose(" ".join(tok[1:]), f"{path}:{n}"))
    return frames, poses


def write_intrinsics(path, k: CameraIntrinsics) -> None:
    Path(path).write_text(json.dumps(k.to_dict(), indent=2) + "\n")


def read_intrinsics(path) -> CameraIntrinsics:
    p = Path(path)
    try:
        d = json.loads(p.read_text())
        return CameraIntrinsics.from_dict(d)
    except OSError as e:
        raise FormatError(f"cannot read {p}: {e.strerror}") from e
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"{p}: bad intrinsics ({e})") from e
