"""
Tests for relative pose labels.

Run with: python -m pytest src/evals/test_labels.py -v
"""

import math

import numpy as np
import pytest

from src.errors import LabelError, LookaheadOutOfRange, UnknownActionClass
from src.evals.metrics import random_se3
from src.geometry import SE3, rotation_about
from src.labels import (
    CURRENT_GRIPPER,
    LookaheadPolicy,
    RelPoseLabel,
    TrajectoryFrame,
    episode_label,
    label_clip,
    make_label,
    to_world,
)


def _straight_line(n, step=0.01):
    """Gripper moving along +x of a static camera, one step per frame."""
    return [TrajectoryFrame(i, SE3.from_translation([i * step, 0.0, 0.5]), SE3.identity()) for i in range(n)]


def test_straight_line_labels():
    """Constant +x motion gives identical translation-only labels."""
    traj = _straight_line(5)
    labels = label_clip(traj, "open", LookaheadPolicy({"open": 2}))
    assert [lab.frame_index for lab in labels] == [0, 1, 2]
    for lab in labels:
        assert lab.lookahead_k == 2
        assert np.allclose(lab.translation, [0.02, 0.0, 0.0])
        assert np.allclose(lab.rotation, 0.0)
        assert lab.frame_convention == CURRENT_GRIPPER


def test_label_is_in_current_gripper_frame():
    """A gripper rotated 90° about z sees world +x motion as its own -y."""
    rz = rotation_about([0, 0, 1], math.pi / 2)
    traj = [TrajectoryFrame(0, SE3(rz, [0, 0, 0]), SE3.identity()),
            TrajectoryFrame(1, SE3(rz, [0.1, 0, 0]), SE3.identity())]
    lab = make_label(traj, 0, 1)
    assert np.allclose(lab.translation, [0.0, -0.1, 0.0], atol=1e-12)


def test_camera_motion_cancels():
    """Same world trajectory seen from a moving camera gives the same labels."""
    rng = np.random.default_rng(0)
    world = [random_se3(rng, 0.3) for _ in range(6)]
    static = [TrajectoryFrame(i, g, SE3.identity()) for i, g in enumerate(world)]
    moving = []
    for i, g in enumerate(world):
        cam = random_se3(rng, 2.0)
        moving.append(TrajectoryFrame(i, cam.inverse() @ g, cam))
    policy = LookaheadPolicy({"pour": 3})
    for a, b in zip(label_clip(static, "pour", policy), label_clip(moving, "pour", policy)):
        assert np.allclose(a.translation, b.translation, atol=1e-9)
        assert np.allclose(a.rotation, b.rotation, atol=1e-9)


def test_label_reconstructs_future_pose():
    """Current pose composed with the label gives the future pose."""
    rng = np.random.default_rng(1)
    traj = [TrajectoryFrame(i, random_se3(rng), random_se3(rng)) for i in range(4)]
    lab = make_label(traj, 1, 2)
    future = to_world(traj[1]) @ lab.to_se3()
    assert np.allclose(future.matrix(), to_world(traj[3]).matrix(), atol=1e-9)
    assert np.linalg.norm(lab.rotation) <= math.pi + 1e-12


def test_labels_compose():
    """T(t -> t+2k) = T(t -> t+k) · T(t+k -> t+2k)."""
    rng = np.random.default_rng(2)
    for _ in range(50):
        traj = [TrajectoryFrame(i, random_se3(rng), random_se3(rng)) for i in range(5)]
        whole = make_label(traj, 0, 4).to_se3()
        halves = make_label(traj, 0, 2).to_se3() @ make_label(traj, 2, 2).to_se3()
        assert np.allclose(whole.matrix(), halves.matrix(), atol=1e-7)


def test_unusable_frames_are_skipped():
    """Pairs touching an invalid frame produce no label."""
    traj = _straight_line(6)
    traj[3] = TrajectoryFrame(3, None, SE3.identity(), valid=False)
    traj[4] = TrajectoryFrame(4, traj[4].gripper_pose_cam, SE3.identity(), valid=False)
    labels = label_clip(traj, "open", LookaheadPolicy({"open": 1}))
    # pairs (2,3), (3,4), (4,5) touch an unusable frame
    assert [lab.frame_index for lab in labels] == [0, 1]


def test_short_clip_gives_no_labels():
    """A clip no longer than k has nothing to look ahead to."""
    assert label_clip(_straight_line(3), "open", LookaheadPolicy({"open": 3})) == []


def test_unknown_action():
    """Actions outside the look-ahead table are refused."""
    with pytest.raises(UnknownActionClass):
        label_clip(_straight_line(3), "juggle", LookaheadPolicy({"open": 1}))


def test_make_label_bounds():
    """Look-ahead past the clip end, k = 0 and a missing pose are errors."""
    traj = _straight_line(3)
    with pytest.raises(LookaheadOutOfRange):
        make_label(traj, 1, 2)
    with pytest.raises(LabelError):
        make_label(traj, 0, 0)
    with pytest.raises(LabelError):
        to_world(TrajectoryFrame(0, None, SE3.identity()))


def test_episode_label_spans_first_to_last_usable():
    """The episode label runs from the first usable frame to the last."""
    traj = _straight_line(5)
    traj[0] = TrajectoryFrame(0, None, SE3.identity(), valid=False)
    ep = episode_label(traj)
    assert ep.frame_index == 1 and ep.lookahead_k == 3
    assert np.allclose(ep.translation, [0.03, 0.0, 0.0])
    assert episode_label(traj[:2]) is None


def test_default_policy_and_record():
    """Default look-ahead table and the JSON record of a label."""
    policy = LookaheadPolicy()
    assert policy.k_for("pour") == 16 and policy.k_for("open") == 8
    lab = RelPoseLabel(frame_index=4, lookahead_k=2, translation=(0.1, 0.0, 0.0), rotation=(0.0, 0.0, 0.5))
    assert lab.to_record() == {"frame": 4, "k": 2, "t": [0.1, 0.0, 0.0], "r": [0.0, 0.0, 0.5],
                               "convention": "current_gripper"}
    with pytest.raises(ValueError):
        LookaheadPolicy({"open": 0})
