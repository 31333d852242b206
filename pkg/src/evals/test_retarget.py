"""
Tests for hand-to-gripper retargeting.

Run with: python -m pytest src/evals/test_retarget.py -v
"""

import numpy as np
import pytest

from src.errors import DegenerateHand, HandError, ImplausibleHand, UnknownHand
from src.evals.conftest import canonical_hand
from src.evals.metrics import HAND_TEMPLATE, orthonormality_error, random_hand, random_se3
from src.geometry import SE3
from src.retarget import (
    HandKeypoints,
    HandSide,
    check_hand_scale,
    gripper_axes,
    gripper_center,
    retarget_many,
    retarget_pose,
)


def test_canonical_hand_frame():
    """
    A flat palm in the z = 0.6 plane gives Ĝz along +z and the palm center
    at (0, 0, 0.6); x points from the thumb base toward the finger bases.
    """
    pose = retarget_pose(canonical_hand()).pose
    assert np.allclose(pose.translation, [0.0, 0.0, 0.6], atol=1e-12)
    assert np.allclose(pose.rotation[:, 2], [0.0, 0.0, 1.0], atol=1e-12)
    expected_x = np.array([0.04, 0.02, 0.0]) / np.linalg.norm([0.04, 0.02, 0.0])
    assert np.allclose(pose.rotation[:, 0], expected_x, atol=1e-12)
    assert np.allclose(pose.rotation[:, 1], [-0.447, 0.894, 0.0], atol=1e-3)


def test_raw_gripper_axes_on_template():
    """Unnormalized axes of the flat template palm, and the y flip between sides."""
    right = HandKeypoints(HAND_TEMPLATE, "right")
    gx, gy, gz = gripper_axes(right)
    assert np.allclose(gz, [0.0, 0.0, 0.0048], atol=1e-12)
    assert np.allclose(gx, [0.04, 0.02, 0.0], atol=1e-12)
    assert np.allclose(gy, np.cross(gz, gx), atol=1e-15)
    _, gy_left, gz_left = gripper_axes(HandKeypoints(HAND_TEMPLATE, "left"))
    assert np.allclose(gz_left, gz) and np.allclose(gy_left, -gy)
    assert np.allclose(gripper_center(right), [0.052, 0.026, 0.0], atol=1e-12)


def test_rotation_is_scale_invariant():
    """Scaling the keypoints about the palm center changes neither center nor orientation."""
    rng = np.random.default_rng(5)
    for side in (HandSide.RIGHT, HandSide.LEFT):
        for _ in range(20):
            kp = random_hand(rng, side)
            center = gripper_center(kp)
            base = retarget_pose(kp).pose
            for s in (0.5, 1.7):
                scaled = HandKeypoints(center + s * (kp.points - center), side)
                pose = retarget_pose(scaled).pose
                assert np.allclose(pose.rotation, base.rotation, atol=1e-12)
                assert np.allclose(pose.translation, base.translation, atol=1e-12)


def test_rotation_is_proper_for_both_sides():
    """Random hands of either side give orthonormal rotations with det +1."""
    rng = np.random.default_rng(0)
    for side in (HandSide.LEFT, HandSide.RIGHT):
        for _ in range(100):
            r = retarget_pose(random_hand(rng, side)).pose.rotation
            assert orthonormality_error(r) < 1e-9
            assert abs(np.linalg.det(r) - 1.0) < 1e-9, f"det {np.linalg.det(r)} for {side}"


def test_z_axis_kept_exactly():
    """The normalized palm normal is the z column, untouched by orthogonalization."""
    rng = np.random.default_rng(1)
    kp = random_hand(rng)
    p = kp.points
    gz = np.cross(p[5] - p[0], p[17] - p[0])
    r = retarget_pose(kp).pose.rotation
    assert np.allclose(r[:, 2], gz / np.linalg.norm(gz), atol=1e-12)


def test_center_is_mean_of_palm_landmarks():
    """The gripper center is the mean of the wrist-adjacent palm landmarks."""
    kp = canonical_hand()
    expected = kp.points[[1, 5, 9, 13, 17]].mean(axis=0)
    assert np.allclose(gripper_center(kp), expected)


def test_rigid_motion_equivariance():
    """Moving the hand rigidly moves the gripper pose by the same transform."""
    rng = np.random.default_rng(2)
    for _ in range(50):
        kp = random_hand(rng)
        motion = random_se3(rng, scale=0.5)
        moved = retarget_pose(kp.transformed(motion)).pose
        expected = motion @ retarget_pose(kp).pose
        assert np.allclose(moved.matrix(), expected.matrix(), atol=1e-9)


def test_left_and_right_differ_in_y():
    """Same keypoints, other side: z and the palm center agree, y flips."""
    right = retarget_pose(canonical_hand(HandSide.RIGHT)).pose
    left = retarget_pose(canonical_hand(HandSide.LEFT)).pose
    assert np.allclose(right.rotation[:, 2], left.rotation[:, 2])
    assert np.allclose(right.rotation[:, 1], -left.rotation[:, 1])
    assert np.allclose(right.translation, left.translation)


def test_collinear_palm_is_degenerate():
    """Keypoints on a line have no palm normal."""
    pts = np.zeros((21, 3))
    pts[:, 0] = np.linspace(0.0, 0.2, 21)
    pts[:, 2] = 0.5
    with pytest.raises(DegenerateHand):
        retarget_pose(HandKeypoints(pts, "right"))


def test_thumb_axis_along_normal_is_degenerate():
    """Thumb base straight below the finger-base centroid along the palm normal."""
    pts = np.array(HAND_TEMPLATE)
    pts[1] = pts[[5, 9, 13, 17]].mean(axis=0) - np.array([0.0, 0.0, 0.05])
    with pytest.raises(DegenerateHand):
        retarget_pose(HandKeypoints(pts, "left"))


def test_hand_scale_bounds():
    """Hands far smaller or larger than a human hand are implausible."""
    kp = canonical_hand()
    assert 0.03 <= check_hand_scale(kp) <= 0.40
    tiny = HandKeypoints(kp.points * 0.01, "right")
    with pytest.raises(ImplausibleHand):
        check_hand_scale(tiny)
    huge = HandKeypoints(kp.points * 10.0, "right")
    with pytest.raises(ImplausibleHand):
        check_hand_scale(huge)
    # implausible hands are a kind of degenerate hand
    assert issubclass(ImplausibleHand, DegenerateHand)


def test_keypoint_validation():
    """Wrong keypoint count, non-finite values and unknown sides are refused."""
    with pytest.raises(HandError):
        HandKeypoints(np.zeros((20, 3)), "right")
    pts = np.array(HAND_TEMPLATE)
    pts[3, 1] = np.inf
    with pytest.raises(HandError):
        HandKeypoints(pts, "right")
    with pytest.raises(UnknownHand):
        HandKeypoints(HAND_TEMPLATE, "both")
    assert HandSide.parse(" Left ") is HandSide.LEFT


def test_retarget_many_keeps_errors_in_place():
    """A degenerate frame yields its error at the same position; its neighbours still retarget."""
    good = canonical_hand()
    bad = HandKeypoints(np.tile(good.points[0], (21, 1)), "right")
    out = retarget_many([good, bad, good])
    assert isinstance(out[1], DegenerateHand)
    assert np.allclose(out[0].pose.matrix(), out[2].pose.matrix())


def test_record_round_trip():
    """hands.jsonl records round-trip and the result still retargets."""
    kp = canonical_hand(HandSide.LEFT)
    rec = kp.to_record(7)
    assert rec["frame"] == 7 and rec["side"] == "left"
    back = HandKeypoints.from_record(rec)
    assert np.array_equal(back.points, kp.points) and back.side is HandSide.LEFT
    assert isinstance(retarget_pose(back).pose, SE3)
