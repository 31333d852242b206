"""
A URDF robot ready to be posed and rendered.

Loading resolves and tessellates every visual once; afterwards a Robot is
immutable and shared by all clips. Posing goes through forward kinematics,
so each visual's camera-frame pose is

    camera_from_base · base_from_link(q) · link_from_visual

Robot placement. The base is static in the world for a whole clip. By
default it is anchored so that the home configuration puts the gripper
frame exactly on the first usable gripper pose of the clip; a configured
base offset (relative to that first pose) overrides the anchor.
"""

from __future__ import annotations

import logging
import pathlib
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from src.errors import MeshError, UrdfError, UrdfLoadFailure
from src.geometry import SE3, CameraIntrinsics
from src.kinematics import JointConfig, forward_kinematics, home_config, link_pose, mid_aperture
from src.mesh import DEFAULT_COLOR, Mesh, load_mesh, make_primitive
from src.render import NEAR_PLANE, Light, RenderInstance, RenderScene, RgbdRender, rasterize
from src.urdf import (
    BoxGeometry,
    CylinderGeometry,
    KinematicModel,
    MeshGeometry,
    SphereGeometry,
    Visual,
    load_urdf,
    resolve_mesh_path,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class VisualMesh:
    link: str
    origin: SE3  # visual frame -> link frame
    mesh: Mesh


@dataclass(frozen=True)
class Robot:
    model: KinematicModel
    visuals: Tuple[VisualMesh, ...]

    def instances(self, q: JointConfig, camera_from_base: SE3) -> List[RenderInstance]:
        """Every visual posed in the camera frame for joint vector q."""
        poses = forward_kinematics(self.model, q)
        return [RenderInstance(v.mesh, camera_from_base @ poses[v.link] @ v.origin)
                for v in self.visuals]

    def locked_joints(self, gripper_joints: Sequence[str] = (),
                      fixed: Optional[Mapping[str, float]] = None) -> Dict[str, float]:
        """
        Joint values held constant during IK.

        Gripper finger joints sit at mid-aperture; explicit values in
        `fixed` are used as given.
        """
        locked = {}
        for name in gripper_joints:
            joint = next((j for j in self.model.movable_joints if j.name == name), None)
            if joint is None:
                raise UrdfLoadFailure(f"gripper joint {name!r} is not a movable joint of {self.model.name}")
            locked[name] = mid_aperture(joint)
        for name, value in (fixed or {}).items():
            if name not in self.model.joint_names:
                raise UrdfLoadFailure(f"locked joint {name!r} is not a movable joint of {self.model.name}")
            locked[name] = float(value)
        return locked

    def home(self, overrides: Optional[Mapping[str, float]] = None,
             locked: Optional[Mapping[str, float]] = None) -> JointConfig:
        q = home_config(self.model, overrides)
        if locked:
            names = self.model.joint_names
            for name, value in locked.items():
                q[names.index(name)] = value
        return q


def _visual_mesh(visual: Visual, urdf_dir: pathlib.Path, mesh_roots: Mapping[str, str],
                 color: Tuple[float, float, float]) -> Mesh:
    g = visual.geometry
    if isinstance(g, MeshGeometry):
        mesh = load_mesh(resolve_mesh_path(g.filename, urdf_dir, mesh_roots)).scaled(g.scale)
    elif isinstance(g, BoxGeometry):
        mesh = make_primitive("box", g.size)
    elif isinstance(g, CylinderGeometry):
        mesh = make_primitive("cylinder", (g.radius, g.length))
    elif isinstance(g, SphereGeometry):
        mesh = make_primitive("sphere", (g.radius,))
    else:
        raise MeshError(f"unsupported visual geometry {type(g).__name__}")
    return mesh.with_color(visual.color or color)


def load_robot(
    urdf_path,
    end_effector: Optional[str] = None,
    mesh_roots: Optional[Mapping[str, str]] = None,
    color: Tuple[float, float, float] = DEFAULT_COLOR,
) -> Robot:
    """
    Parse a URDF and load all of its visual geometry.

    Raises:
        UrdfLoadFailure wrapping any parse, mesh or file error
    """
    path = pathlib.Path(urdf_path)
    try:
        model = load_urdf(path, end_effector)
        visuals = []
        for link in model.links:
            for vis in link.visuals:
                visuals.append(VisualMesh(link.name, vis.origin,
                                          _visual_mesh(vis, path.parent, mesh_roots or {}, color)))
    except (UrdfError, MeshError, OSError) as err:
        raise UrdfLoadFailure(f"{path}: {err}") from err
    logger.info("loaded robot %s: %d links, %d movable joints, %d visuals, end effector %s",
                model.name, len(model.links), model.dof, len(visuals), model.end_effector)
    return Robot(model, tuple(visuals))


# =============================================================================
# Placement
# =============================================================================


def anchor_base(robot: Robot, q_home: JointConfig, world_from_gripper: SE3,
                ee_offset: Optional[SE3] = None, base_offset: Optional[SE3] = None) -> SE3:
    """
    world_from_base for a clip whose first usable gripper pose is `world_from_gripper`.

    Home-anchored: world_from_gripper · (FK_home · ee_offset)⁻¹, or
    world_from_gripper · base_offset when an explicit offset is configured.
    """
    if base_offset is not None:
        return world_from_gripper @ base_offset
    ee_offset = ee_offset or SE3.identity()
    return world_from_gripper @ (link_pose(robot.model, q_home) @ ee_offset).inverse()


def ik_target(world_from_base: SE3, world_from_gripper: SE3, ee_offset: Optional[SE3] = None) -> SE3:
    """End-effector link pose in the base frame that puts the gripper at `world_from_gripper`."""
    ee_offset = ee_offset or SE3.identity()
    return world_from_base.inverse() @ world_from_gripper @ ee_offset.inverse()


def render_robot(
    robot: Robot,
    q: JointConfig,
    camera_from_base: SE3,
    intrinsics: CameraIntrinsics,
    light: Optional[Light] = None,
    near: float = NEAR_PLANE,
    bands: int = 1,
) -> RgbdRender:
    """Rasterize the robot at joint vector q seen from a camera."""
    scene = RenderScene(robot.instances(q, camera_from_base), intrinsics, light or Light(), near)
    return rasterize(scene, bands=bands)
