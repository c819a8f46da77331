"""Shared fixtures: one procedural object with its databases and a short sequence."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import strategies as st

from pose_forge.core import CameraIntrinsics, Se3Pose
from pose_forge.registration import build_hash_db
from pose_forge.synth import (SequenceParams, build_model_cloud, default_intrinsics, generate_sequence,
                              generate_shape, surface_cloud)

finite = st.floats(min_value=-1.0, max_value=1.0, allow_nan=False, allow_infinity=False)
rotvecs = st.tuples(finite, finite, finite).map(lambda v: np.array(v) * 3.0)
translations = st.tuples(finite, finite, finite).map(np.array)
poses = st.builds(lambda r, t: Se3Pose.from_rotvec(r, t), rotvecs, translations)


def random_pose(rng: np.random.Generator, max_t: float = 1.0) -> Se3Pose:
    from pose_forge.core import random_rotation
    return Se3Pose(random_rotation(rng), rng.uniform(-max_t, max_t, 3))


@pytest.fixture(scope="session")
def k() -> CameraIntrinsics:
    return default_intrinsics()


@pytest.fixture(scope="session")
def k640() -> CameraIntrinsics:
    return CameraIntrinsics(500.0, 500.0, 320.0, 240.0, 640, 480)


@pytest.fixture(scope="session")
def mesh():
    return generate_shape(0)


@pytest.fixture(scope="session")
def model(mesh):
    """(classified model cloud, class db) of the shared mesh."""
    return build_model_cloud(mesh)


@pytest.fixture(scope="session")
def hash_db(mesh, model):
    return build_hash_db(model[0], surface=surface_cloud(mesh))


@pytest.fixture(scope="session")
def sequence(mesh):
    """(frames, script) of a 12-frame moving sequence."""
    return generate_sequence(mesh, SequenceParams(n_frames=12), seed=0)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
