"""
URDF parsing into an immutable kinematic model.

Supported subset: <link> with <visual> (origin, mesh with scale, box,
cylinder, sphere, material color), <joint> of type revolute, continuous
(mapped to revolute with limits [-2π, 2π]), prismatic and fixed, with
origin xyz/rpy, axis and limits. Collision, inertial, transmission and
gazebo elements are ignored; <mimic> is ignored (the joint stays
independent).
"""

from __future__ import annotations

import logging
import math
import os
import pathlib
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np

from src.errors import CyclicKinematics, MalformedXml, MissingLink, UnsupportedJointType
from src.geometry import SE3, se3_from_rpy_xyz

logger = logging.getLogger(__name__)

MESH_ROOT_ENV = "EMBODISWAP_MESH_ROOT"
CONTINUOUS_LIMIT = 2.0 * math.pi
MOVABLE_TYPES = ("revolute", "prismatic")


@dataclass(frozen=True)
class MeshGeometry:
    filename: str
    scale: Tuple[float, float, float] = (1.0, 1.0, 1.0)


@dataclass(frozen=True)
class BoxGeometry:
    size: Tuple[float, float, float]


@dataclass(frozen=True)
class CylinderGeometry:
    radius: float
    length: float


@dataclass(frozen=True)
class SphereGeometry:
    radius: float


Geometry = Union[MeshGeometry, BoxGeometry, CylinderGeometry, SphereGeometry]


@dataclass(frozen=True)
class Visual:
    geometry: Geometry
    origin: SE3
    color: Optional[Tuple[float, float, float]] = None


@dataclass(frozen=True)
class Link:
    name: str
    visuals: Tuple[Visual, ...] = ()


@dataclass(frozen=True)
class Joint:
    name: str
    type: str
    parent: str
    child: str
    origin: SE3
    axis: np.ndarray
    lower: float = 0.0
    upper: float = 0.0

    @property
    def movable(self) -> bool:
        return self.type in MOVABLE_TYPES


@dataclass(frozen=True)
class KinematicModel:
    """
    Parsed robot: a tree of links connected by joints.

    `joints` keeps document order; `movable_joints` (document order too)
    defines the layout of every joint vector. `chain` lists the joints
    from the root to the end effector.
    """

    name: str
    links: Tuple[Link, ...]
    joints: Tuple[Joint, ...]
    root: str
    end_effector: str
    _parent_joint: Dict[str, Joint] = field(default_factory=dict, repr=False, compare=False)

    @property
    def movable_joints(self) -> Tuple[Joint, ...]:
        return tuple(j for j in self.joints if j.movable)

    @property
    def dof(self) -> int:
        return len(self.movable_joints)

    @property
    def joint_names(self) -> List[str]:
        return [j.name for j in self.movable_joints]

    def link(self, name: str) -> Link:
        for link in self.links:
            if link.name == name:
                return link
        raise MissingLink(f"no link named {name!r}")

    def chain_to(self, link_name: str) -> List[Joint]:
        """Joints from the root down to `link_name`, in kinematic order."""
        self.link(link_name)
        chain = []
        j = self._parent_joint.get(link_name)
        while j is not None:
            chain.append(j)
            j = self._parent_joint.get(j.parent)
        return chain[::-1]

    def topological_joints(self) -> List[Joint]:
        """Every joint ordered so that a parent link is always posed before its child."""
        children: Dict[str, List[Joint]] = {}
        for j in self.joints:
            children.setdefault(j.parent, []).append(j)
        order, stack = [], [self.root]
        while stack:
            link = stack.pop()
            kids = children.get(link, [])
            order.extend(kids)
            stack.extend(j.child for j in reversed(kids))
        return order

    def limits(self) -> Tuple[np.ndarray, np.ndarray]:
        mov = self.movable_joints
        return (np.array([j.lower for j in mov], dtype=np.float64),
                np.array([j.upper for j in mov], dtype=np.float64))


# =============================================================================
# XML helpers
# =============================================================================


def _floats(text: Optional[str], n: int, default, what: str) -> Tuple[float, ...]:
    if text is None:
        return tuple(default)
    try:
        values = tuple(float(x) for x in text.split())
    except ValueError:
        raise MalformedXml(f"non-numeric {what}: {text!r}") from None
    if len(values) != n:
        raise MalformedXml(f"{what} needs {n} numbers, got {text!r}")
    if not all(math.isfinite(v) for v in values):
        raise MalformedXml(f"non-finite {what}: {text!r}")
    return values


def _origin(el: Optional[ET.Element]) -> SE3:
    if el is None:
        return SE3.identity()
    xyz = _floats(el.get("xyz"), 3, (0.0, 0.0, 0.0), "origin xyz")
    rpy = _floats(el.get("rpy"), 3, (0.0, 0.0, 0.0), "origin rpy")
    return se3_from_rpy_xyz(xyz, rpy)


def _attr_float(el: ET.Element, name: str, what: str) -> float:
    raw = el.get(name)
    if raw is None:
        raise MalformedXml(f"{what} is missing attribute {name!r}")
    return _floats(raw, 1, (), f"{what} {name}")[0]


def _color(el: Optional[ET.Element], named: Mapping[str, Tuple[float, float, float]]):
    if el is None:
        return None
    c = el.find("color")
    if c is not None:
        return _floats(c.get("rgba"), 4, (), "material rgba")[:3]
    return named.get(el.get("name", ""))


def _geometry(el: ET.Element, link_name: str) -> Geometry:
    geom = el.find("geometry")
    if geom is None or len(geom) == 0:
        raise MalformedXml(f"visual of link {link_name!r} has no geometry")
    shape = geom[0]
    what = f"{shape.tag} in link {link_name!r}"
    if shape.tag == "mesh":
        filename = shape.get("filename")
        if not filename:
            raise MalformedXml(f"{what} has no filename")
        scale = _floats(shape.get("scale"), 3, (1.0, 1.0, 1.0), f"{what} scale")
        return MeshGeometry(filename, scale)
    if shape.tag == "box":
        return BoxGeometry(_floats(shape.get("size"), 3, (), f"{what} size"))
    if shape.tag == "cylinder":
        return CylinderGeometry(_attr_float(shape, "radius", what), _attr_float(shape, "length", what))
    if shape.tag == "sphere":
        return SphereGeometry(_attr_float(shape, "radius", what))
    raise MalformedXml(f"unsupported geometry <{shape.tag}> in link {link_name!r}")


def _joint(el: ET.Element) -> Joint:
    name = el.get("name")
    jtype = el.get("type")
    if not name or not jtype:
        raise MalformedXml("joint needs both name and type attributes")
    if jtype not in ("revolute", "continuous", "prismatic", "fixed"):
        raise UnsupportedJointType(f"joint {name!r} has unsupported type {jtype!r}")

    parent, child = el.find("parent"), el.find("child")
    if parent is None or child is None or not parent.get("link") or not child.get("link"):
        raise MalformedXml(f"joint {name!r} needs <parent link=...> and <child link=...>")

    axis = np.array(_floats(el.find("axis").get("xyz") if el.find("axis") is not None else None,
                            3, (1.0, 0.0, 0.0), f"joint {name!r} axis"))
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise MalformedXml(f"joint {name!r} has a zero axis")
    axis = axis / norm
    axis.setflags(write=False)

    lower = upper = 0.0
    if jtype == "continuous":
        jtype, lower, upper = "revolute", -CONTINUOUS_LIMIT, CONTINUOUS_LIMIT
    elif jtype in MOVABLE_TYPES:
        lim = el.find("limit")
        if lim is None:
            raise MalformedXml(f"{jtype} joint {name!r} requires a <limit> element")
        lower = _floats(lim.get("lower"), 1, (0.0,), f"joint {name!r} lower")[0]
        upper = _floats(lim.get("upper"), 1, (0.0,), f"joint {name!r} upper")[0]
        if lower > upper:
            raise MalformedXml(f"joint {name!r} has lower limit {lower} > upper {upper}")

    return Joint(name, jtype, parent.get("link"), child.get("link"),
                 _origin(el.find("origin")), axis, lower, upper)


# =============================================================================
# Public API
# =============================================================================


def parse_urdf(text: Union[str, bytes], end_effector: Optional[str] = None) -> KinematicModel:
    """
    Parse a URDF document into a KinematicModel.

    Args:
        text: the XML document
        end_effector: link to drive with IK; defaults to the deepest leaf link

    Returns:
        KinematicModel with the tree invariant validated

    Raises:
        MalformedXml, UnsupportedJointType, CyclicKinematics, MissingLink
    """
    try:
        root_el = ET.fromstring(text)
    except ET.ParseError as err:
        raise MalformedXml(f"URDF is not well-formed XML: {err}") from None
    if root_el.tag != "robot":
        raise MalformedXml(f"expected <robot> root element, got <{root_el.tag}>")

    # Named materials declared at the top level can be referenced from visuals
    named_colors = {}
    for mat in root_el.findall("material"):
        c = mat.find("color")
        if mat.get("name") and c is not None:
            named_colors[mat.get("name")] = _floats(c.get("rgba"), 4, (), "material rgba")[:3]

    links: List[Link] = []
    seen = set()
    for el in root_el.findall("link"):
        name = el.get("name")
        if not name:
            raise MalformedXml("link without a name")
        if name in seen:
            raise MalformedXml(f"duplicate link {name!r}")
        seen.add(name)
        visuals = tuple(
            Visual(_geometry(v, name), _origin(v.find("origin")), _color(v.find("material"), named_colors))
            for v in el.findall("visual")
        )
        links.append(Link(name, visuals))
    if not links:
        raise MalformedXml("URDF defines no links")

    joints = [_joint(el) for el in root_el.findall("joint")]
    names = [j.name for j in joints]
    if len(set(names)) != len(names):
        raise MalformedXml("duplicate joint names")

    parent_of: Dict[str, Joint] = {}
    for j in joints:
        for ref in (j.parent, j.child):
            if ref not in seen:
                raise MissingLink(f"joint {j.name!r} references undefined link {ref!r}")
        if j.child in parent_of:
            raise CyclicKinematics(f"link {j.child!r} has more than one parent joint")
        parent_of[j.child] = j

    roots = [link.name for link in links if link.name not in parent_of]
    if not roots:
        raise CyclicKinematics("every link has a parent: the joint graph contains a cycle")
    if len(roots) > 1:
        raise MalformedXml(f"kinematic graph is disconnected, roots: {roots}")
    root = roots[0]

    # Walk up from every link; with single parents and one root, any walk
    # that does not reach the root is trapped in a cycle.
    for link in links:
        steps, cur = 0, link.name
        while cur != root:
            cur = parent_of[cur].parent
            steps += 1
            if steps > len(links):
                raise CyclicKinematics(f"link {link.name!r} is part of a kinematic cycle")

    if end_effector is None:
        end_effector = _deepest_leaf(links, joints, parent_of, root)
    elif end_effector not in seen:
        raise MissingLink(f"end-effector link {end_effector!r} not found")

    model = KinematicModel(root_el.get("name", ""), tuple(links), tuple(joints), root,
                           end_effector, dict(parent_of))
    logger.debug("parsed URDF %r: %d links, %d joints (%d movable), ee=%s",
                 model.name, len(links), len(joints), model.dof, end_effector)
    return model


def _deepest_leaf(links, joints, parent_of, root) -> str:
    has_child = {j.parent for j in joints}
    best, best_depth = root, -1
    for link in links:
        if link.name in has_child:
            continue
        depth, cur = 0, link.name
        while cur != root:
            cur = parent_of[cur].parent
            depth += 1
        if depth > best_depth:
            best, best_depth = link.name, depth
    return best


def load_urdf(path, end_effector: Optional[str] = None) -> KinematicModel:
    return parse_urdf(pathlib.Path(path).read_bytes(), end_effector)


def resolve_mesh_path(filename: str, urdf_dir, mesh_roots: Optional[Mapping[str, str]] = None) -> pathlib.Path:
    """
    Resolve a visual mesh filename to a local path.

    Args:
        filename: as written in the URDF
        urdf_dir: directory holding the URDF file
        mesh_roots: package name -> directory for package:// URIs

    Notes:
        - Relative names resolve against the URDF directory
        - package://pkg/rel resolves against mesh_roots[pkg], then against
          $EMBODISWAP_MESH_ROOT/pkg/rel, then against the URDF directory
        - file:// prefixes are stripped
    """
    mesh_roots = mesh_roots or {}
    if filename.startswith("package://"):
        rest = filename[len("package://"):]
        package, _, rel = rest.partition("/")
        if package in mesh_roots:
            return pathlib.Path(mesh_roots[package]) / rel
        env_root = os.environ.get(MESH_ROOT_ENV)
        if env_root:
            return pathlib.Path(env_root) / package / rel
        logger.warning("no mesh root for package %r; resolving %s next to the URDF", package, filename)
        return pathlib.Path(urdf_dir) / rel
    if filename.startswith("file://"):
        filename = filename[len("file://"):]
    p = pathlib.Path(filename)
    return p if p.is_absolute() else pathlib.Path(urdf_dir) / p
