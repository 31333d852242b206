"""
Tests for depth-aware blending and the mask agreement check.

Run with: python -m pytest src/evals/test_composite.py -v
"""

import numpy as np
import pytest

from src.composite import SceneFrame, blend, effective_scene_depth, mask_agreement
from src.errors import DimensionMismatch
from src.render import RgbdRender


def _scene(depth, value=10) -> SceneFrame:
    depth = np.asarray(depth, dtype=np.float32)
    return SceneFrame(np.full(depth.shape + (3,), value, np.uint8), depth)


def _robot(depth, value=200) -> RgbdRender:
    depth = np.asarray(depth, dtype=np.float32)
    return RgbdRender(np.full(depth.shape + (3,), value, np.uint8), depth, np.isfinite(depth))


def test_nearer_source_wins():
    """Each pixel takes whichever source is nearer; uncovered robot pixels keep the scene."""
    scene = _scene([[1.0, 1.0, 1.0]])
    robot = _robot([[0.5, 1.5, np.inf]])
    out = blend(scene, robot)
    assert out.robot_mask.tolist() == [[True, False, False]]
    assert out.rgb[0, 0, 0] == 200 and out.rgb[0, 1, 0] == 10 and out.rgb[0, 2, 0] == 10


def test_ties_go_to_the_scene():
    """Equal depths keep the scene pixel."""
    out = blend(_scene([[1.0]]), _robot([[1.0]]))
    assert not out.robot_mask[0, 0]


def test_invalid_scene_depth_counts_as_infinitely_far():
    """NaN, zero and negative scene depths lose to any covered robot pixel."""
    scene = _scene([[np.nan, 0.0, -2.0, np.inf]])
    robot = _robot([[5.0, 5.0, 5.0, 5.0]])
    out = blend(scene, robot)
    assert out.robot_mask.all()
    assert np.all(np.isinf(effective_scene_depth(scene.depth)))


def test_uncovered_pixels_never_win():
    """Coverage gates the test even where the scene depth is invalid."""
    robot = RgbdRender(np.full((1, 1, 3), 200, np.uint8), np.full((1, 1), np.inf, np.float32),
                       np.zeros((1, 1), bool))
    out = blend(_scene([[np.nan]]), robot)
    assert not out.robot_mask.any() and out.rgb[0, 0, 0] == 10


def test_depth_bias_keeps_contact_visible():
    """A gripper 3 mm behind the surface shows up with a 5 mm bias."""
    scene, robot = _scene([[1.0]]), _robot([[1.003]])
    assert not blend(scene, robot).robot_mask[0, 0]
    assert blend(scene, robot, depth_bias=0.005).robot_mask[0, 0]


def test_size_mismatch():
    """Scene and robot images of different sizes cannot be blended."""
    with pytest.raises(DimensionMismatch):
        blend(_scene(np.ones((2, 3))), _robot(np.ones((3, 2))))
    with pytest.raises(DimensionMismatch):
        SceneFrame(np.zeros((2, 2, 3), np.uint8), np.zeros((2, 3), np.float32))
    with pytest.raises(DimensionMismatch):
        SceneFrame(np.zeros((2, 2, 3), np.uint8), np.zeros((2, 2), np.float32), np.zeros((1, 2), bool))


def test_mask_agreement():
    """Intersection over union of two masks, 1 for identical masks."""
    a = np.array([[True, True, False, False]])
    b = np.array([[False, True, True, False]])
    assert mask_agreement(a, b) == pytest.approx(1 / 3)
    assert mask_agreement(a, a) == 1.0
    assert mask_agreement(np.zeros((2, 2), bool), np.zeros((2, 2), bool)) == 1.0
    with pytest.raises(DimensionMismatch):
        mask_agreement(a, np.zeros((2, 2), bool))


SCENE_DEPTHS = {"finite": 1.0, "nan": np.nan, "zero": 0.0, "negative": -1.0}
ROBOT_DEPTHS = {"nearer": 0.5, "tie": 1.0, "farther": 1.5}


@pytest.mark.parametrize("covered", [True, False])
@pytest.mark.parametrize("scene_kind", sorted(SCENE_DEPTHS))
@pytest.mark.parametrize("robot_kind", sorted(ROBOT_DEPTHS))
def test_blend_truth_table(covered, scene_kind, robot_kind):
    """Every coverage x scene validity x depth order combination follows the nearer-source rule."""
    scene = _scene([[SCENE_DEPTHS[scene_kind]]])
    robot = RgbdRender(np.full((1, 1, 3), 200, np.uint8), np.full((1, 1), ROBOT_DEPTHS[robot_kind], np.float32),
                       np.full((1, 1), covered))
    out = blend(scene, robot)
    expected = covered and (scene_kind != "finite" or robot_kind == "nearer")
    assert bool(out.robot_mask[0, 0]) is expected
    assert out.rgb[0, 0, 0] == (200 if expected else 10)


def test_farther_scene_never_hides_the_robot():
    """Pushing the scene back (or invalidating it) only ever adds robot pixels."""
    rng = np.random.default_rng(0)
    for _ in range(50):
        scene_depth = rng.uniform(0.2, 3.0, (16, 16)).astype(np.float32)
        robot_depth = rng.uniform(0.2, 3.0, (16, 16)).astype(np.float32)
        robot_depth[rng.random((16, 16)) < 0.3] = np.inf
        robot = _robot(robot_depth)
        before = blend(_scene(scene_depth), robot).robot_mask

        further = scene_depth + rng.uniform(0.0, 1.0, scene_depth.shape).astype(np.float32)
        further[rng.random((16, 16)) < 0.1] = np.nan
        after = blend(_scene(further), robot).robot_mask
        assert np.all(after[before]), "a robot pixel disappeared when the scene moved away"

        bias = blend(_scene(scene_depth), robot, depth_bias=float(rng.uniform(0.0, 0.05))).robot_mask
        assert np.all(bias[before])
