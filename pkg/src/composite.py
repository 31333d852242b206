"""
Depth-aware blending of the actor-erased scene and the robot render.

Per pixel the nearer source wins. Scene depth that is NaN, zero or
negative counts as +inf (the robot wins), and an exact tie goes to the
scene. The optional depth bias is subtracted from the robot depth to keep
the gripper visible where it touches an object surface.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.errors import DimensionMismatch
from src.render import RgbdRender


@dataclass(frozen=True)
class SceneFrame:
    rgb: np.ndarray                  # (H, W, 3) uint8, actor erased
    depth: np.ndarray                # (H, W) float32 meters, NaN where invalid
    body_mask: Optional[np.ndarray] = None  # (H, W) bool, validation only

    def __post_init__(self):
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise DimensionMismatch(f"scene rgb must be HxWx3, got {self.rgb.shape}")
        if self.rgb.shape[:2] != self.depth.shape:
            raise DimensionMismatch(f"scene rgb {self.rgb.shape[:2]} and depth {self.depth.shape} differ")
        if self.body_mask is not None and self.body_mask.shape != self.depth.shape:
            raise DimensionMismatch("body mask size differs from the scene")


@dataclass(frozen=True)
class CompositeFrame:
    rgb: np.ndarray         # (H, W, 3) uint8
    robot_mask: np.ndarray  # (H, W) bool


def effective_scene_depth(depth: np.ndarray) -> np.ndarray:
    """Scene depth with invalid values (NaN, <= 0) mapped to +inf."""
    d = np.asarray(depth, dtype=np.float32)
    return np.where(np.isfinite(d) & (d > 0), d, np.float32(np.inf))


def blend(scene: SceneFrame, robot: RgbdRender, depth_bias: float = 0.0) -> CompositeFrame:
    """
    Composite the robot render over the scene with a per-pixel depth test.

    Args:
        scene: inpainted frame with metric depth
        robot: rasterized robot
        depth_bias: meters subtracted from the robot depth before comparing

    Returns:
        CompositeFrame; robot_mask marks pixels where the robot won

    Raises:
        DimensionMismatch when the two images differ in size
    """
    if robot.depth.shape != scene.depth.shape:
        raise DimensionMismatch(f"render {robot.depth.shape} and scene {scene.depth.shape} differ")

    robot_depth = robot.depth.astype(np.float32) - np.float32(depth_bias)
    # strict comparison: ties keep the scene
    robot_mask = robot.coverage & (robot_depth < effective_scene_depth(scene.depth))
    rgb = np.where(robot_mask[..., None], robot.rgb, scene.rgb).astype(np.uint8)
    return CompositeFrame(rgb, robot_mask)


def mask_agreement(body_mask: np.ndarray, robot_mask: np.ndarray) -> float:
    """
    Intersection over union of the erased actor region and the composited robot.

    A low value flags frames where the robot landed far from the hand it
    replaces. Two empty masks agree perfectly (1.0).
    """
    if body_mask.shape != robot_mask.shape:
        raise DimensionMismatch("mask sizes differ")
    body = np.asarray(body_mask, bool)
    robot = np.asarray(robot_mask, bool)
    union = np.count_nonzero(body | robot)
    if union == 0:
        return 1.0
    return np.count_nonzero(body & robot) / union
