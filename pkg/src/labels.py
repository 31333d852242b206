"""
Relative 6-DOF end-effector labels.

Each frame t is paired with the gripper pose k frames later. Both poses are
first lifted to the world frame with the per-frame camera pose, so camera
ego-motion cancels out, and the label is the transform of the future pose
expressed in the current gripper frame:

    T_rel = (W_c(t) · G(t))⁻¹ · (W_c(t+k) · G(t+k))

The 6 numbers are the translation (meters) and the axis-angle rotation
(radians, magnitude <= π).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from pydantic import BaseModel, ConfigDict, PositiveInt, RootModel

from src.errors import LookaheadOutOfRange, LabelError, UnknownActionClass
from src.geometry import SE3, axis_angle_to_rotation, rotation_to_axis_angle, se3_relative

logger = logging.getLogger(__name__)

CURRENT_GRIPPER = "current_gripper"

DEFAULT_LOOKAHEAD = {"open": 8, "close": 8, "cut": 8, "pour": 16, "place": 16}


@dataclass(frozen=True)
class TrajectoryFrame:
    """
    One frame of a clip's gripper trajectory.

    `gripper_pose_cam` is None when the hand could not be retargeted;
    `valid` is False for those frames and for frames the robot cannot reach.
    """

    index: int
    gripper_pose_cam: Optional[SE3]
    world_from_camera: SE3
    timestamp: float = 0.0
    valid: bool = True

    @property
    def usable(self) -> bool:
        return self.valid and self.gripper_pose_cam is not None


class RelPoseLabel(BaseModel):
    model_config = ConfigDict(frozen=True)

    frame_index: int
    lookahead_k: PositiveInt
    translation: tuple[float, float, float]
    rotation: tuple[float, float, float]
    frame_convention: str = CURRENT_GRIPPER

    def to_se3(self) -> SE3:
        return SE3(axis_angle_to_rotation(self.rotation), self.translation)

    def to_record(self) -> dict:
        """labels.jsonl row: {frame, k, t, r, convention}."""
        return {"frame": self.frame_index, "k": self.lookahead_k,
                "t": list(self.translation), "r": list(self.rotation),
                "convention": self.frame_convention}


class LookaheadPolicy(RootModel[Dict[str, PositiveInt]]):
    """Action class -> look-ahead in frames (shorter for quick motions like open/close)."""

    root: Dict[str, PositiveInt] = dict(DEFAULT_LOOKAHEAD)

    def k_for(self, action_class: str) -> int:
        try:
            return self.root[action_class]
        except KeyError:
            raise UnknownActionClass(
                f"no look-ahead configured for action {action_class!r}; known: {sorted(self.root)}"
            ) from None


def to_world(frame: TrajectoryFrame) -> SE3:
    """Camera-compensated gripper pose: world_from_camera · gripper_pose_cam."""
    if frame.gripper_pose_cam is None:
        raise LabelError(f"frame {frame.index} has no gripper pose")
    return frame.world_from_camera @ frame.gripper_pose_cam


def _encode(frame_index: int, k: int, rel: SE3) -> RelPoseLabel:
    return RelPoseLabel(
        frame_index=frame_index,
        lookahead_k=k,
        translation=tuple(float(x) for x in rel.translation),
        rotation=tuple(float(x) for x in rotation_to_axis_angle(rel.rotation)),
    )


def make_label(traj: Sequence[TrajectoryFrame], t: int, k: int) -> RelPoseLabel:
    """
    Label pairing clip position t with position t+k.

    Raises:
        LookaheadOutOfRange when t+k is past the end of the clip
    """
    if k < 1:
        raise LabelError(f"look-ahead must be >= 1, got {k}")
    if t < 0 or t + k >= len(traj):
        raise LookaheadOutOfRange(f"frame {t} + {k} is outside a clip of {len(traj)} frames")
    rel = se3_relative(to_world(traj[t]), to_world(traj[t + k]))
    return _encode(traj[t].index, k, rel)


def label_clip(traj: Sequence[TrajectoryFrame], action_class: str, policy: LookaheadPolicy) -> List[RelPoseLabel]:
    """
    One label per position t in [0, len - k - 1] whose frames t and t+k are both usable.

    Raises:
        UnknownActionClass when the policy has no look-ahead for the action
    """
    k = policy.k_for(action_class)
    if len(traj) <= k:
        logger.warning("clip of %d frames is too short for look-ahead %d (%s); no labels",
                       len(traj), k, action_class)
        return []
    return [make_label(traj, t, k) for t in range(len(traj) - k)
            if traj[t].usable and traj[t + k].usable]


def episode_label(traj: Sequence[TrajectoryFrame]) -> Optional[RelPoseLabel]:
    """Whole-clip target from the first to the last usable frame, or None if fewer than two."""
    usable = [i for i, f in enumerate(traj) if f.usable]
    if len(usable) < 2:
        return None
    first, last = usable[0], usable[-1]
    rel = se3_relative(to_world(traj[first]), to_world(traj[last]))
    return _encode(traj[first].index, last - first, rel)
