"""
Oracles, samplers and error metrics for evaluating the pipeline.

These are slow-but-obvious reference computations (finite differences,
brute-force ray casting) that the fast implementations are checked
against, plus random generators for hands, poses and kinematic chains.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from src.geometry import SE3, CameraIntrinsics, rotation_to_axis_angle
from src.kinematics import jacobian, link_pose
from src.render import RenderScene
from src.retarget import HandKeypoints, HandSide
from src.urdf import KinematicModel

# =============================================================================
# Rotations and poses
# =============================================================================


def orthonormality_error(r) -> float:
    """max |RᵀR - I|"""
    r = np.asarray(r, dtype=np.float64)
    return float(np.max(np.abs(r.T @ r - np.eye(3))))


def determinant_error(r) -> float:
    return abs(float(np.linalg.det(r)) - 1.0)


def rotation_distance(a, b) -> float:
    """Geodesic angle between two rotations (radians)."""
    return float(np.linalg.norm(rotation_to_axis_angle(np.asarray(a).T @ np.asarray(b))))


def pose_distance(a: SE3, b: SE3) -> Tuple[float, float]:
    """(translation error in meters, rotation error in radians)."""
    return float(np.linalg.norm(a.translation - b.translation)), rotation_distance(a.rotation, b.rotation)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def random_se3(rng: np.random.Generator, scale: float = 1.0) -> SE3:
    return SE3(random_rotation(rng), rng.uniform(-scale, scale, 3))


# =============================================================================
# Hands
# =============================================================================

# A relaxed right hand, palm facing +z, meters. Rows follow MANO order:
# wrist, thumb (1-4), index (5-8), middle (9-12), ring (13-16), pinky (17-20).
HAND_TEMPLATE = np.array([
    [0.000, 0.000, 0.000],
    [0.020, 0.010, 0.000], [0.040, 0.030, 0.005], [0.055, 0.045, 0.010], [0.065, 0.060, 0.012],
    [0.080, 0.000, 0.000], [0.115, 0.000, 0.005], [0.135, 0.000, 0.010], [0.150, 0.000, 0.012],
    [0.090, 0.020, 0.000], [0.128, 0.022, 0.005], [0.150, 0.024, 0.010], [0.166, 0.025, 0.012],
    [0.070, 0.040, 0.000], [0.103, 0.044, 0.005], [0.123, 0.046, 0.010], [0.137, 0.047, 0.012],
    [0.000, 0.060, 0.000], [0.025, 0.068, 0.004], [0.040, 0.072, 0.008], [0.050, 0.075, 0.010],
])


def random_hand(rng: np.random.Generator, side: HandSide = HandSide.RIGHT,
                noise: float = 0.003, depth: Tuple[float, float] = (0.3, 0.8)) -> HandKeypoints:
    """
    A plausible hand: the template jittered, randomly rotated and placed in
    front of the camera. Left hands are the template mirrored in y.
    """
    pts = HAND_TEMPLATE + rng.normal(0.0, noise, HAND_TEMPLATE.shape)
    if side is HandSide.LEFT:
        pts = pts * np.array([1.0, -1.0, 1.0])
    pts = pts - pts.mean(axis=0)
    pts = pts @ random_rotation(rng).T
    pts = pts + np.array([rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(*depth)])
    return HandKeypoints(pts, side)


# =============================================================================
# Kinematics
# =============================================================================


def numeric_jacobian(model: KinematicModel, q, h: float = 1e-6, link: Optional[str] = None) -> np.ndarray:
    """
    Central finite-difference Jacobian, same layout as kinematics.jacobian.

    The angular rows come from log(R(q+h) R(q-h)ᵀ) / 2h, the world-frame
    angular velocity.
    """
    q = np.asarray(q, dtype=np.float64)
    jac = np.zeros((6, len(q)))
    for i in range(len(q)):
        dq = np.zeros_like(q)
        dq[i] = h
        plus, minus = link_pose(model, q + dq, link), link_pose(model, q - dq, link)
        jac[:3, i] = (plus.translation - minus.translation) / (2 * h)
        jac[3:, i] = rotation_to_axis_angle(plus.rotation @ minus.rotation.T) / (2 * h)
    return jac


def jacobian_fd_error(model: KinematicModel, q, h: float = 1e-6) -> float:
    """Max entry difference between the analytic and finite-difference Jacobians."""
    return float(np.max(np.abs(jacobian(model, q) - numeric_jacobian(model, q, h)))) if len(q) else 0.0


def random_config(model: KinematicModel, rng: np.random.Generator, margin: float = 0.0) -> np.ndarray:
    lo, hi = model.limits()
    lo = np.maximum(lo, -2.0) + margin
    hi = np.minimum(hi, 2.0) - margin
    return rng.uniform(lo, hi)


def random_chain_urdf(rng: np.random.Generator, n_joints: int, prismatic_prob: float = 0.25) -> str:
    """A serial chain with random origins, axes and joint types, ending in a fixed tool link."""
    lines = ['<?xml version="1.0"?>', '<robot name="random_chain">']
    lines += [f'  <link name="l{i}"/>' for i in range(n_joints + 1)]
    lines.append('  <link name="tool"/>')
    for i in range(n_joints):
        xyz = " ".join(f"{x:.6f}" for x in rng.uniform(-0.3, 0.3, 3))
        rpy = " ".join(f"{x:.6f}" for x in rng.uniform(-np.pi, np.pi, 3))
        axis = " ".join(f"{x:.6f}" for x in rng.normal(size=3))
        prismatic = rng.random() < prismatic_prob
        jtype, lim = ("prismatic", 'lower="-0.5" upper="0.5"') if prismatic else ("revolute", 'lower="-3" upper="3"')
        lines += [
            f'  <joint name="j{i}" type="{jtype}">',
            f'    <parent link="l{i}"/>',
            f'    <child link="l{i + 1}"/>',
            f'    <origin xyz="{xyz}" rpy="{rpy}"/>',
            f'    <axis xyz="{axis}"/>',
            f'    <limit {lim}/>',
            '  </joint>',
        ]
    lines += [
        '  <joint name="tool_fixed" type="fixed">',
        f'    <parent link="l{n_joints}"/>',
        '    <child link="tool"/>',
        '    <origin xyz="0.1 0 0.05" rpy="0.3 0 0"/>',
        '  </joint>',
        '</robot>',
    ]
    return "\n".join(lines)


# =============================================================================
# Rendering
# =============================================================================


def _ray_hits(tri: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """
    Möller-Trumbore intersection of rays from the camera origin with one triangle.

    Returns the hit parameter t per ray (inf where missed). With dirs
    normalized to z = 1, t is the camera-space depth.
    """
    v0, v1, v2 = tri
    e1, e2 = v1 - v0, v2 - v0
    p = np.cross(dirs, e2)
    det = p @ e1
    ok = np.abs(det) > 1e-14
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    s = -v0
    u = (p @ s) * inv
    qv = np.cross(s, e1)
    v = (dirs @ qv) * inv
    t = (qv @ e2) * inv
    hit = ok & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 0)
    return np.where(hit, t, np.inf)


def _segment_distance(px: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(((px - a) @ ab) / max(ab @ ab, 1e-20), 0.0, 1.0)
    return np.linalg.norm(px - (a + t[:, None] * ab), axis=1)


def raycast_oracle(scene: RenderScene, guard: float = 0.5) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Brute-force depth and coverage by casting one ray per pixel center.

    Returns:
        (depth, coverage, comparable): comparable is False for pixels
        within `guard` pixels of any projected triangle edge, where the
        fill convention rather than geometry decides coverage

    Notes:
        Only valid for scenes entirely in front of the near plane.
    """
    k: CameraIntrinsics = scene.intrinsics
    h, w = k.height, k.width
    jj, ii = np.mgrid[0:h, 0:w]
    dirs = np.stack([(ii - k.cx) / k.fx, (jj - k.cy) / k.fy, np.ones_like(ii, dtype=np.float64)], -1).reshape(-1, 3)
    pix = np.stack([ii, jj], -1).reshape(-1, 2).astype(np.float64)

    depth = np.full(h * w, np.inf)
    comparable = np.ones(h * w, dtype=bool)
    for inst in scene.instances:
        verts = inst.mesh.vertices @ inst.pose.rotation.T + inst.pose.translation
        for tri in inst.mesh.triangles:
            p = verts[tri]
            depth = np.minimum(depth, _ray_hits(p, dirs))
            uv = np.stack([k.fx * p[:, 0] / p[:, 2] + k.cx, k.fy * p[:, 1] / p[:, 2] + k.cy], axis=1)
            for a, b in ((0, 1), (1, 2), (2, 0)):
                comparable &= _segment_distance(pix, uv[a], uv[b]) > guard
    return depth.reshape(h, w), np.isfinite(depth).reshape(h, w), comparable.reshape(h, w)


def random_triangle_scene(rng: np.random.Generator, n: int, intrinsics: CameraIntrinsics,
                          z_range: Tuple[float, float] = (1.0, 3.0)) -> List[np.ndarray]:
    """n random camera-frame triangles whose vertices project near the image."""
    tris = []
    for _ in range(n):
        z = rng.uniform(*z_range, 3)
        u = rng.uniform(-0.2 * intrinsics.width, 1.2 * intrinsics.width, 3)
        v = rng.uniform(-0.2 * intrinsics.height, 1.2 * intrinsics.height, 3)
        x = (u - intrinsics.cx) * z / intrinsics.fx
        y = (v - intrinsics.cy) * z / intrinsics.fy
        tris.append(np.stack([x, y, z], axis=1))
    return tris


def summarize(values: Sequence[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        return {"n": 0}
    return {"n": int(arr.size), "mean": float(arr.mean()), "max": float(arr.max()),
            "p95": float(np.percentile(arr, 95))}
