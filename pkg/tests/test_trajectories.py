import numpy as np
import pytest

from implicitrl import observer as obs
from implicitrl import trajectories as traj


def test_load_trajectories_catalog():
    trajectories = traj.load_trajectories()
    assert len(trajectories) == 8
    returns = sorted(t.final_return for t in trajectories)
    assert returns == [-1, -1, -1, 0, 0, 2, 2, 2]
    names = [t.name for t in trajectories]
    assert len(set(names)) == 8
    for t in trajectories:
        assert t.duration_s > 0
        assert sum(e["reward"] for e in t.events) == t.final_return
        for e in t.events:
            assert 0 <= e["t_s"] <= t.duration_s
            assert e["reward"] in traj.REWARD_TO_CLASS
        for c in t.cues:
            assert c["valence"] in traj.CUE_TO_CLASS


def test_zero_return_trajectories_have_mixed_cues():
    # The no-op trajectories carry both positive and negative reach/retract
    # cues so their positivity lands mid-range rather than at the neutral
    # baseline.
    for t in traj.load_trajectories():
        if t.final_return == 0:
            valences = {c["valence"] for c in t.cues}
            assert valences == {"positive", "negative"}


def test_record_trajectory_shapes_and_determinism():
    t = traj.load_trajectories()[0]
    profile = obs.clean_profile()
    f1, a1 = traj.record_trajectory(t, profile, seed=4)
    f2, a2 = traj.record_trajectory(t, profile, seed=4)
    assert f1.shape == (int(t.duration_s * obs.FPS), 42)
    assert a1.shape == (f1.shape[0], 10)
    assert np.array_equal(f1, f2)
    f3, _ = traj.record_trajectory(t, profile, seed=5)
    assert not np.array_equal(f1, f3)


def test_positive_trajectory_draws_positive_gestures():
    profile = obs.clean_profile()
    positive = next(t for t in traj.load_trajectories() if t.final_return == 2)
    negative = next(t for t in traj.load_trajectories() if t.final_return == -1)
    pos_col = obs.ANNOTATION_CHANNELS.index(obs.POSITIVE)
    neg_col = obs.ANNOTATION_CHANNELS.index(obs.NEGATIVE)
    _, a_pos = traj.record_trajectory(positive, profile, seed=0)
    _, a_neg = traj.record_trajectory(negative, profile, seed=0)
    assert a_pos[:, pos_col].sum() > a_pos[:, neg_col].sum()
    assert a_neg[:, neg_col].sum() > a_neg[:, pos_col].sum()
