"""
Rigid transforms, rotation representations and the pinhole camera.

Camera convention (used everywhere in this package):
    +Z forward, +X right, +Y down (computer-vision convention).
    Pixel (column i, row j) is sampled at (u, v) = (i, j).

Upstream hand, depth and camera-pose models emit this convention. Mixing in a
+Y-up or -Z-forward convention silently flips every retargeted pose, so any
adapter that ingests other data must convert before building these types.

Rotations are stored as 3x3 matrices. Axis-angle vectors only appear at
serialization boundaries (labels) and as the IK rotation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from src.errors import GeometryError, NonPositiveDepth

# Type aliases for readability; both are plain float64 numpy arrays.
Rotation3 = np.ndarray   # (3, 3)
AxisAngle = np.ndarray   # (3,)

ORTHONORMAL_TOL = 1e-6
NEAR_PI_TRACE = -1.0 + 1e-6
MIN_DEPTH = 1e-9


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def skew(v) -> np.ndarray:
    """Skew-symmetric matrix [v]x such that [v]x @ w == cross(v, w)."""
    x, y, z = np.asarray(v, dtype=np.float64).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m: np.ndarray) -> np.ndarray:
    """Inverse of skew() for the antisymmetric part of m."""
    return np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]]) / 2.0


def is_rotation(r, tol: float = ORTHONORMAL_TOL) -> bool:
    """Check the Rotation3 invariants (orthonormal, proper)."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
        return False
    return abs(np.linalg.det(r) - 1.0) <= tol


@dataclass(frozen=True)
class SE3:
    """
    Rigid transform: x_out = rotation @ x_in + translation (meters).

    Instances are immutable; the arrays are read-only copies so values can
    be shared freely between threads.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = _frozen(self.rotation).reshape(3, 3)
        trans = _frozen(self.translation).reshape(3)
        if not is_rotation(rot):
            raise GeometryError("rotation block is not a proper orthonormal matrix")
        if not np.all(np.isfinite(trans)):
            raise GeometryError("translation must be finite")
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "SE3":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t) -> "SE3":
        return cls(np.eye(3), t)

    @classmethod
    def from_rotation(cls, r) -> "SE3":
        return cls(r, np.zeros(3))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __matmul__(self, other: "SE3") -> "SE3":
        return se3_compose(self, other)

    def inverse(self) -> "SE3":
        return se3_inverse(self)

    def apply(self, p) -> np.ndarray:
        """Transform a single 3-vector."""
        return self.rotation @ np.asarray(p, dtype=np.float64).reshape(3) + self.translation


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels, plus the image size they belong to."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx} fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise GeometryError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_record(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_record(cls, rec: dict) -> "CameraIntrinsics":
        return cls(float(rec["fx"]), float(rec["fy"]), float(rec["cx"]), float(rec["cy"]),
                   int(rec["width"]), int(rec["height"]))


# =============================================================================
# SE(3) group operations
# =============================================================================


def se3_compose(a: SE3, b: SE3) -> SE3:
    """Return a·b: apply b first, then a."""
    return SE3(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def se3_inverse(a: SE3) -> SE3:
    rt = a.rotation.T
    return SE3(rt, -rt @ a.translation)


def se3_relative(a: SE3, b: SE3) -> SE3:
    """Return a⁻¹·b, the pose b expressed in the frame of a."""
    rt = a.rotation.T
    return SE3(rt @ b.rotation, rt @ (b.translation - a.translation))


def se3_from_matrix(m) -> SE3:
    """
    Build an SE3 from a 4x4 matrix or 16 row-major numbers.

    Args:
        m: anything numpy can reshape to (4, 4)

    Returns:
        SE3 with the upper-left rotation block and the last column translation

    Notes:
        - The bottom row must be (0, 0, 0, 1) within 1e-9
        - The rotation block is validated, never silently re-orthogonalized
    """
    arr = np.asarray(m, dtype=np.float64)
    if arr.size != 16:
        raise GeometryError(f"expected 16 numbers for a pose, got {arr.size}")
    arr = arr.reshape(4, 4)
    if np.max(np.abs(arr[3] - np.array([0.0, 0.0, 0.0, 1.0]))) > 1e-9:
        raise GeometryError("pose matrix bottom row must be (0, 0, 0, 1)")
    return SE3(arr[:3, :3], arr[:3, 3])


def se3_to_list(a: SE3) -> list:
    """Row-major 16-number serialization used in every file that carries a pose."""
    return [float(x) for x in a.matrix().reshape(16)]


def transform_points(a: SE3, points) -> np.ndarray:
    """Apply a rigid transform to an (N, 3) array of points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    return pts @ a.rotation.T + a.translation


# =============================================================================
# Rotation representations
# =============================================================================


def axis_angle_to_rotation(v) -> Rotation3:
    """
    Rodrigues formula: R = I + sin(θ)[k]x + (1 - cos(θ))[k]x², θ = |v|.

    Small angles use the series form of the same expression so the result
    stays accurate below ~1e-8 rad instead of dividing by θ.
    """
    v = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(v)):
        raise GeometryError("axis-angle components must be finite")
    theta = float(np.linalg.norm(v))
    k = skew(v)
    if theta < 1e-8:
        # sin(θ)/θ ≈ 1 - θ²/6, (1 - cos θ)/θ² ≈ 1/2 - θ²/24
        return np.eye(3) + (1.0 - theta**2 / 6.0) * k + (0.5 - theta**2 / 24.0) * (k @ k)
    return (np.eye(3)
            + (math.sin(theta) / theta) * k
            + ((1.0 - math.cos(theta)) / theta**2) * (k @ k))


def rotation_to_axis_angle(r) -> AxisAngle:
    """
    Logarithm map SO(3) -> rotation vector with magnitude in [0, π].

    Args:
        r: 3x3 rotation matrix

    Returns:
        3-vector whose direction is the rotation axis and norm the angle

    Notes:
        - The angle comes from atan2 of the antisymmetric and symmetric
          parts, which is well conditioned over the whole range.
        - When trace < -1 + 1e-6 (angle near π) the antisymmetric part
          vanishes, so the axis is read from the dominant eigenvector of
          the symmetric part and its sign aligned with what is left of the
          antisymmetric part. At exactly π either sign is a valid answer.
    """
    r = np.asarray(r, dtype=np.float64).reshape(3, 3)
    w = vee(r)
    s = float(np.linalg.norm(w))
    c = (float(np.trace(r)) - 1.0) / 2.0
    theta = math.atan2(s, c)

    if theta < 1e-8:
        # log(R) ≈ vee(R - Rᵀ)/2 to second order
        return w.copy()

    if np.trace(r) < NEAR_PI_TRACE:
        sym = (r + r.T) / 2.0
        eigvals, eigvecs = np.linalg.eigh(sym)
        axis = eigvecs[:, int(np.argmax(eigvals))]
        if float(np.dot(axis, w)) < 0.0:
            axis = -axis
        return axis * theta

    return w * (theta / s)


def rotation_about(axis, angle: float) -> Rotation3:
    """Rotation by `angle` radians about a (not necessarily unit) axis."""
    axis = np.asarray(axis, dtype=np.float64).reshape(3)
    return axis_angle_to_rotation(axis / np.linalg.norm(axis) * angle)


def rpy_to_rotation(roll: float, pitch: float, yaw: float) -> Rotation3:
    """URDF fixed-axis convention: R = Rz(yaw) · Ry(pitch) · Rx(roll)."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    return np.array([
        [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
        [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
        [-sp, cp * sr, cp * cr],
    ])


# =============================================================================
# Pinhole camera
# =============================================================================


def project(k: CameraIntrinsics, p) -> Tuple[np.ndarray, float]:
    """
    Project a camera-frame point to pixel coordinates.

    Returns:
        ((u, v), depth) with u = fx·x/z + cx, v = fy·y/z + cy, depth = z

    Raises:
        NonPositiveDepth if z <= 1e-9
    """
    x, y, z = np.asarray(p, dtype=np.float64).reshape(3)
    if z <= MIN_DEPTH:
        raise NonPositiveDepth(f"point at z={z} is on or behind the camera plane")
    return np.array([k.fx * x / z + k.cx, k.fy * y / z + k.cy]), float(z)


def unproject(k: CameraIntrinsics, u: float, v: float, depth: float) -> np.ndarray:
    """Inverse of project(): pixel + metric depth -> camera-frame point."""
    if depth <= MIN_DEPTH:
        raise NonPositiveDepth(f"depth {depth} is not in front of the camera")
    return np.array([(u - k.cx) * depth / k.fx, (v - k.cy) * depth / k.fy, depth])


def se3_from_rpy_xyz(xyz: Sequence[float], rpy: Sequence[float]) -> SE3:
    """Pose from URDF-style origin attributes."""
    return SE3(rpy_to_rotation(*rpy), xyz)
