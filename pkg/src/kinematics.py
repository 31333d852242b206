"""
Forward kinematics, geometric Jacobian and damped-least-squares IK.

All functions are pure: the model is immutable and joint vectors are
copied, so frames of different clips can be solved in parallel. Within one
clip, frame t's solution seeds frame t+1 (see pipeline).

Joint vectors are plain float arrays ordered like model.movable_joints
(radians for revolute joints, meters for prismatic ones).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, PositiveFloat, PositiveInt
from scipy.linalg import cho_factor, cho_solve

from src.errors import ConfigLengthMismatch, MissingLink
from src.geometry import SE3, axis_angle_to_rotation, rotation_to_axis_angle
from src.urdf import Joint, KinematicModel

logger = logging.getLogger(__name__)

JointConfig = np.ndarray


class IkParams(BaseModel):
    """Damped-least-squares settings. Defaults are tuned for arm-scale robots."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    damping: PositiveFloat = 0.05
    max_iters: PositiveInt = 200
    pos_tol: PositiveFloat = 1e-4      # meters
    rot_tol: PositiveFloat = 1e-3      # radians
    step_scale: PositiveFloat = 1.0


@dataclass(frozen=True)
class IkResult:
    config: JointConfig
    residual_pos: float
    residual_rot: float
    converged: bool
    iterations: int


def _check_config(model: KinematicModel, q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.shape[0] != model.dof:
        raise ConfigLengthMismatch(f"model has {model.dof} movable joints, got {q.shape[0]} values")
    return q


def clamp_to_limits(model: KinematicModel, q) -> np.ndarray:
    lo, hi = model.limits()
    return np.clip(np.asarray(q, dtype=np.float64), lo, hi)


def within_limits(model: KinematicModel, q) -> bool:
    lo, hi = model.limits()
    q = np.asarray(q, dtype=np.float64)
    return bool(np.all(q >= lo) and np.all(q <= hi))


def home_config(model: KinematicModel, overrides: Optional[Mapping[str, float]] = None) -> JointConfig:
    """Zero configuration clamped into the limits, with optional per-joint values."""
    q = clamp_to_limits(model, np.zeros(model.dof))
    for name, value in (overrides or {}).items():
        if name not in model.joint_names:
            raise MissingLink(f"no movable joint named {name!r}")
        q[model.joint_names.index(name)] = value
    return clamp_to_limits(model, q)


def mid_aperture(joint: Joint) -> float:
    """Middle of a joint's range; the default fixed value of gripper finger joints."""
    return 0.5 * (joint.lower + joint.upper)


def _motion(joint: Joint, value: float) -> SE3:
    if joint.type == "revolute":
        return SE3.from_rotation(axis_angle_to_rotation(joint.axis * value))
    if joint.type == "prismatic":
        return SE3.from_translation(joint.axis * value)
    return SE3.identity()


def forward_kinematics(model: KinematicModel, q) -> Dict[str, SE3]:
    """
    Pose of every link in the root frame.

    child = parent · joint.origin · motion(q_i); fixed joints contribute
    their origin only. The root link is the identity.
    """
    q = _check_config(model, q)
    index = {j.name: i for i, j in enumerate(model.movable_joints)}
    poses = {model.root: SE3.identity()}
    for j in model.topological_joints():
        frame = poses[j.parent] @ j.origin
        if j.movable:
            frame = frame @ _motion(j, q[index[j.name]])
        poses[j.child] = frame
    # links unreachable from the root cannot exist in a validated model
    return poses


def link_pose(model: KinematicModel, q, link: Optional[str] = None) -> SE3:
    """Root-frame pose of one link (the end effector by default), walking only its chain."""
    q = _check_config(model, q)
    index = {j.name: i for i, j in enumerate(model.movable_joints)}
    pose = SE3.identity()
    for j in model.chain_to(link or model.end_effector):
        pose = pose @ j.origin
        if j.movable:
            pose = pose @ _motion(j, q[index[j.name]])
    return pose


def jacobian(model: KinematicModel, q, link: Optional[str] = None) -> np.ndarray:
    """
    Geometric Jacobian of the end-effector origin in the root frame.

    Returns:
        (6, dof) array; rows 0-2 linear velocity (m), rows 3-5 angular
        velocity (rad). Columns of joints off the end-effector chain are 0.
    """
    q = _check_config(model, q)
    index = {j.name: i for i, j in enumerate(model.movable_joints)}
    chain = model.chain_to(link or model.end_effector)

    # Pose of each joint frame (after its origin, before its motion)
    axes, origins, cols = [], [], []
    pose = SE3.identity()
    for j in chain:
        pose = pose @ j.origin
        if j.movable:
            axes.append(pose.rotation @ j.axis)
            origins.append(pose.translation.copy())
            cols.append(index[j.name])
            pose = pose @ _motion(j, q[index[j.name]])
    p_ee = pose.translation

    jac = np.zeros((6, model.dof))
    for a, o, c in zip(axes, origins, cols):
        if model.movable_joints[c].type == "revolute":
            jac[:3, c] = np.cross(a, p_ee - o)
            jac[3:, c] = a
        else:
            jac[:3, c] = a
    return jac


def pose_error(current: SE3, target: SE3) -> np.ndarray:
    """
    6-vector [position error; rotation error] in the root frame.

    The rotation error is the axis-angle of R_current⁻¹ R_target rotated
    back into the root frame.
    """
    rot = current.rotation @ rotation_to_axis_angle(current.rotation.T @ target.rotation)
    return np.concatenate([target.translation - current.translation, rot])


def solve_ik(
    model: KinematicModel,
    target: SE3,
    seed,
    params: Optional[IkParams] = None,
    locked: Optional[Mapping[str, float]] = None,
) -> IkResult:
    """
    Damped-least-squares inverse kinematics for the end-effector link.

    Args:
        model: parsed robot
        target: desired end-effector pose in the root frame
        seed: initial joint vector
        params: IkParams (defaults if None)
        locked: joint name -> value held fixed during the solve

    Returns:
        IkResult with the best iterate seen (smallest combined residual),
        never raising for unreachable targets

    Notes:
        - Δq = s · Jᵀ (J Jᵀ + λ² I)⁻¹ e, solved with a Cholesky factorization
        - joint limits are clamped after every step, so returned configs
          never leave the limits
    """
    params = params or IkParams()
    q = clamp_to_limits(model, _check_config(model, seed).copy())

    names = model.joint_names
    free = np.ones(model.dof, dtype=bool)
    for name, value in (locked or {}).items():
        if name not in names:
            raise MissingLink(f"cannot lock unknown joint {name!r}")
        i = names.index(name)
        q[i] = value
        free[i] = False
    q = clamp_to_limits(model, q)

    lam2 = params.damping ** 2
    best = None
    it = 0
    for it in range(params.max_iters + 1):
        err = pose_error(link_pose(model, q), target)
        pos_res = float(np.linalg.norm(err[:3]))
        rot_res = float(np.linalg.norm(err[3:]))
        done = pos_res <= params.pos_tol and rot_res <= params.rot_tol
        # converged iterates always beat unconverged ones
        score = (not done, pos_res + rot_res)
        if best is None or score < best[0]:
            best = (score, q.copy(), pos_res, rot_res, it)
        if done:
            break
        if it == params.max_iters:
            break

        jac = jacobian(model, q)
        jac[:, ~free] = 0.0
        gram = jac @ jac.T + lam2 * np.eye(6)
        dq = jac.T @ cho_solve(cho_factor(gram), err)
        q = clamp_to_limits(model, q + params.step_scale * dq)

    _, q_best, pos_res, rot_res, at = best
    converged = pos_res <= params.pos_tol and rot_res <= params.rot_tol
    if not converged:
        logger.debug("IK stopped after %d iterations: residual %.4g m, %.4g rad", it, pos_res, rot_res)
    return IkResult(q_best, pos_res, rot_res, converged, at)
