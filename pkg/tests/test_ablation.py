import csv

import numpy as np
import pytest

from pose_forge.ablation import (CSV_COLUMNS, AblationParams, ablate_pair, ablate_sequence, corrupt_matches,
                                 ground_truth_flow, write_ablation_csv)
from pose_forge.core import Se3Pose
from pose_forge.errors import DataError
from pose_forge.synth import SequenceParams, generate_sequence
from pose_forge.tracking.flow import Matches


@pytest.fixture(scope="module")
def seq(mesh):
    return generate_sequence(mesh, SequenceParams(n_frames=11), seed=4)


def test_corrupt_matches_fraction_and_box():
    rng = np.random.default_rng(0)
    src = rng.uniform(0, 100, (200, 2))
    m = Matches(src, src + 1.0)
    box = (10, 50, 20, 80)
    noisy, bad = corrupt_matches(m, 0.2, box, rng)
    assert bad.sum() == 40
    assert np.array_equal(noisy.src, m.src)
    assert np.array_equal(noisy.dst[~bad], m.dst[~bad])
    d = noisy.dst[bad]
    assert np.all((d[:, 0] >= 20) & (d[:, 0] < 80) & (d[:, 1] >= 10) & (d[:, 1] < 50))


def test_ground_truth_flow_identity(seq):
    frames, _ = seq
    vs, us = np.nonzero(frames[0].mask)
    m = Matches(np.stack([us, vs], axis=1)[::50], np.zeros((len(us[::50]), 2)))
    dst, ok = ground_truth_flow(m, frames[0], Se3Pose.identity())
    assert ok.all()
    assert np.abs(dst - m.src).max() < 1e-9


def test_ablate_pair_clean_is_accurate(seq):
    frames, script = seq
    gt = script.relative(0, 5)
    row = ablate_pair(frames[0], frames[5], gt, np.random.default_rng(1), AblationParams(corruption=0.0))
    # no corruption: both arms see nearly the same matches and recover the motion closely
    assert row.epe_raw < 1.0 and row.epe_filt < 1.0
    assert row.rot_raw < 0.2 and row.trans_raw < 0.2


def test_ablate_pair_corruption_hurts_raw(seq):
    frames, script = seq
    row = ablate_pair(frames[0], frames[5], script.relative(0, 5), np.random.default_rng(2))
    assert row.epe_raw > 5 * row.epe_filt
    assert row.rot_raw > row.rot_filt and row.trans_raw > row.trans_filt
    assert row.filtered_wins


def test_ablate_sequence_pairs_and_determinism(seq, tmp_path):
    frames, script = seq
    rows = ablate_sequence(frames, script.poses, seed=3)
    assert [r.pair for r in rows] == ["0-5", "5-10"]
    again = ablate_sequence(frames, script.poses, seed=3)
    assert rows == again
    write_ablation_csv(tmp_path / "a.csv", rows)
    with open(tmp_path / "a.csv") as fh:
        got = list(csv.reader(fh))
    assert tuple(got[0]) == CSV_COLUMNS
    assert [float(x) for x in got[1][1:]] == [getattr(rows[0], c) for c in CSV_COLUMNS[1:]]


def test_ablation_errors(seq):
    frames, script = seq
    with pytest.raises(DataError):
        ablate_sequence(frames[:5], script.poses[:5])
    with pytest.raises(DataError):
        ablate_sequence(frames, script.poses[:-1])
    with pytest.raises(DataError):
        AblationParams(corruption=1.0)
    with pytest.raises(DataError):
        AblationParams(estimator="magic")
    with pytest.raises(DataError):
        AblationParams(stride=0)
