"""
Hand-to-gripper retargeting.

Maps the 21 MANO joint keypoints of one hand to a 6-DOF gripper pose:

    G_c = (kp1 + kp5 + kp9 + kp13 + kp17) / 5             palm center
    G_z = (kp5 - kp0) x (kp17 - kp0)                      palm normal
    G_x = (kp5 + kp9 + kp13 + kp17) / 4 - kp1             thumb base -> finger bases
    G_y = s · (G_z x G_x),  s = +1 right hand, -1 left hand

G_x and G_z are not orthogonal for a general hand, so the rotation keeps
Ĝz exact and re-derives the x axis as Ĝx' = Ĝy x Ĝz. The result is a proper
rotation for both hand sides. Two- and three-finger grippers share this
frame; the gripper model only changes which URDF gets rendered.

MANO keypoint order is the standard 21-joint layout: 0 wrist, 1-4 thumb,
5-8 index, 9-12 middle, 13-16 ring, 17-20 little finger.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple, Union

import numpy as np

from src.errors import DegenerateHand, HandError, ImplausibleHand, UnknownHand
from src.geometry import SE3

NUM_KEYPOINTS = 21
PALM_CENTER_IDS = (1, 5, 9, 13, 17)
FINGER_BASE_IDS = (5, 9, 13, 17)

# Thresholds for rejecting hands that would give a meaningless frame
MIN_NORMAL_NORM = 1e-8      # m², |G_z|
MAX_AXIS_ALIGNMENT = 0.999  # |Ĝx · Ĝz|

DEFAULT_SPAN = (0.03, 0.40)  # meters, plausible max inter-keypoint distance


class HandSide(str, Enum):
    LEFT = "left"
    RIGHT = "right"

    @classmethod
    def parse(cls, value) -> "HandSide":
        if isinstance(value, HandSide):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise UnknownHand(f"hand side must be 'left' or 'right', got {value!r}") from None

    @property
    def sign(self) -> float:
        return 1.0 if self is HandSide.RIGHT else -1.0


@dataclass(frozen=True)
class HandKeypoints:
    """21 camera-frame keypoints (meters) of one hand, MANO order."""

    points: np.ndarray
    side: HandSide

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.shape != (NUM_KEYPOINTS, 3):
            raise HandError(f"expected {NUM_KEYPOINTS}x3 keypoints, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise HandError("keypoints must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "side", HandSide.parse(self.side))

    def span(self) -> float:
        """Largest distance between any two keypoints."""
        diff = self.points[:, None, :] - self.points[None, :, :]
        return float(np.sqrt(np.max(np.sum(diff * diff, axis=-1))))

    def transformed(self, t: SE3) -> "HandKeypoints":
        return HandKeypoints(self.points @ t.rotation.T + t.translation, self.side)

    @classmethod
    def from_record(cls, rec: dict) -> "HandKeypoints":
        return cls(np.asarray(rec["keypoints"], dtype=np.float64), HandSide.parse(rec["side"]))

    def to_record(self, frame: int) -> dict:
        return {"frame": int(frame), "side": self.side.value,
                "keypoints": [[float(c) for c in p] for p in self.points]}


@dataclass(frozen=True)
class GripperPose:
    """Retargeted gripper frame expressed in the camera frame."""

    pose: SE3


def check_hand_scale(kp: HandKeypoints, lo: float = DEFAULT_SPAN[0], hi: float = DEFAULT_SPAN[1]) -> float:
    """
    Reject reconstructions that are not hand-sized.

    Returns:
        The measured span in meters

    Raises:
        ImplausibleHand when the span leaves [lo, hi]
    """
    span = kp.span()
    if not (lo <= span <= hi):
        raise ImplausibleHand(f"keypoint span {span:.4f} m outside plausible range [{lo}, {hi}]")
    return span


def gripper_center(kp: HandKeypoints) -> np.ndarray:
    """Palm center G_c: mean of the thumb base and the four finger bases."""
    return kp.points[list(PALM_CENTER_IDS)].mean(axis=0)


def gripper_axes(kp: HandKeypoints) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Raw (unnormalized) gripper axes (G_x, G_y, G_z).

    Raises:
        DegenerateHand when the palm landmarks are collinear or the thumb
        axis is (nearly) parallel to the palm normal
    """
    p = kp.points
    gz = np.cross(p[5] - p[0], p[17] - p[0])
    gx = p[list(FINGER_BASE_IDS)].mean(axis=0) - p[1]

    nz = np.linalg.norm(gz)
    nx = np.linalg.norm(gx)
    if nz < MIN_NORMAL_NORM:
        raise DegenerateHand(f"palm landmarks are collinear (|G_z| = {nz:.3e})")
    if nx == 0.0 or abs(np.dot(gx / nx, gz / nz)) > MAX_AXIS_ALIGNMENT:
        raise DegenerateHand("thumb axis is parallel to the palm normal")

    gy = kp.side.sign * np.cross(gz, gx)
    return gx, gy, gz


def retarget_pose(kp: HandKeypoints) -> GripperPose:
    """
    Gripper pose T_g = [Ĝx' Ĝy Ĝz | G_c] in the camera frame.

    Args:
        kp: keypoints of one hand

    Returns:
        GripperPose whose rotation columns are (Ĝx', Ĝy, Ĝz)

    Notes:
        - Ĝz is kept exactly; Ĝx' = Ĝy x Ĝz absorbs the non-orthogonality
        - det(R) = +1 for both sides: the side sign flips Ĝy, and Ĝx'
          follows from it
    """
    gx, _, gz = gripper_axes(kp)
    z = gz / np.linalg.norm(gz)
    x = gx / np.linalg.norm(gx)
    y = kp.side.sign * np.cross(z, x)
    y = y / np.linalg.norm(y)
    x = np.cross(y, z)
    return GripperPose(SE3(np.column_stack([x, y, z]), gripper_center(kp)))


def retarget_many(hands: List[HandKeypoints]) -> List[Union[GripperPose, DegenerateHand]]:
    """Retarget a sequence, returning the DegenerateHand error in place of failed frames."""
    out = []
    for kp in hands:
        try:
            out.append(retarget_pose(kp))
        except DegenerateHand as err:
            out.append(err)
    return out
