"""
Pipeline configuration.

A single YAML file, validated into PipelineConfig at startup. Unknown keys
are rejected at every level, and relative paths are resolved against the
directory that holds the config file.

Example:

    urdf: robots/panda.urdf
    end_effector: panda_hand
    gripper_joints: [panda_finger_joint1, panda_finger_joint2]
    mesh_roots:
      franka_description: robots/franka_description
    ik: {damping: 0.05, max_iters: 200}
    lookahead: {open: 8, close: 8, pour: 16}
    light: {direction: [0, 0, 1], ambient: 0.35, diffuse: 0.65}
    depth_bias: 0.005
    output_dir: out
    workers: 4
"""

from __future__ import annotations

import hashlib
import pathlib
from typing import Dict, List, Literal, Optional, Tuple

import orjson
import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    field_validator,
    model_validator,
)

from src import __version__
from src.errors import ConfigInvalid, GeometryError
from src.geometry import SE3, se3_from_matrix
from src.kinematics import IkParams
from src.labels import LookaheadPolicy
from src.mesh import DEFAULT_COLOR
from src.render import NEAR_PLANE, Light
from src.retarget import DEFAULT_SPAN

IDENTITY_16 = (1.0, 0.0, 0.0, 0.0,
               0.0, 1.0, 0.0, 0.0,
               0.0, 0.0, 1.0, 0.0,
               0.0, 0.0, 0.0, 1.0)


class PipelineConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    urdf: str
    end_effector: Optional[str] = None
    ee_offset: Tuple[float, ...] = IDENTITY_16
    base_offset: Optional[Tuple[float, ...]] = None
    home: Dict[str, float] = Field(default_factory=dict)
    gripper_joints: List[str] = Field(default_factory=list)
    locked_joints: Dict[str, float] = Field(default_factory=dict)
    mesh_roots: Dict[str, str] = Field(default_factory=dict)
    ik: IkParams = Field(default_factory=IkParams)
    max_ik_residual: PositiveFloat = 0.005  # meters
    lookahead: LookaheadPolicy = Field(default_factory=LookaheadPolicy)
    light: Light = Field(default_factory=Light)
    robot_color: Tuple[float, float, float] = DEFAULT_COLOR
    depth_bias: NonNegativeFloat = 0.0
    near_plane: PositiveFloat = NEAR_PLANE
    hand_span: Tuple[PositiveFloat, PositiveFloat] = DEFAULT_SPAN
    output_dir: str = "out"
    workers: PositiveInt = 1
    render_bands: PositiveInt = 1
    write_robot_masks: bool = False
    on_missing: Literal["error", "skip"] = "error"
    trace_path: Optional[str] = "runs.jsonl"  # relative to output_dir

    @field_validator("ee_offset", "base_offset")
    @classmethod
    def _pose16(cls, v):
        if v is None:
            return v
        if len(v) != 16:
            raise ValueError(f"pose must have 16 numbers (row-major 4x4), got {len(v)}")
        try:
            se3_from_matrix(v)
        except GeometryError as err:
            raise ValueError(str(err)) from None
        return tuple(float(x) for x in v)

    @field_validator("robot_color")
    @classmethod
    def _rgb(cls, v):
        if any(not 0.0 <= c <= 1.0 for c in v):
            raise ValueError("robot_color components must be in [0, 1]")
        return v

    @field_validator("hand_span")
    @classmethod
    def _span(cls, v):
        if v[0] >= v[1]:
            raise ValueError(f"hand_span lower bound {v[0]} must be below upper bound {v[1]}")
        return v

    @model_validator(mode="after")
    def _locks_disjoint(self):
        both = set(self.gripper_joints) & set(self.locked_joints)
        if both:
            raise ValueError(f"joints listed both as gripper and locked joints: {sorted(both)}")
        return self

    def ee_offset_pose(self) -> SE3:
        return se3_from_matrix(self.ee_offset)

    def base_offset_pose(self) -> Optional[SE3]:
        return None if self.base_offset is None else se3_from_matrix(self.base_offset)

    def trace_file(self) -> Optional[pathlib.Path]:
        """Where traces go: trace_path under output_dir unless absolute, None when disabled."""
        if self.trace_path is None:
            return None
        return pathlib.Path(self.output_dir) / self.trace_path

    def resolved(self, base_dir) -> "PipelineConfig":
        """Copy with relative paths made absolute against `base_dir`."""
        base = pathlib.Path(base_dir)

        def fix(p: Optional[str]) -> Optional[str]:
            if p is None:
                return None
            path = pathlib.Path(p)
            return str(path if path.is_absolute() else (base / path))

        return self.model_copy(update={
            "urdf": fix(self.urdf),
            "output_dir": fix(self.output_dir),
            "mesh_roots": {k: fix(v) for k, v in self.mesh_roots.items()},
        })


def parse_config(data, base_dir=None) -> PipelineConfig:
    """
    Validate an already-loaded mapping.

    Raises:
        ConfigInvalid carrying the validation message
    """
    if not isinstance(data, dict):
        raise ConfigInvalid(f"config must be a mapping, got {type(data).__name__}")
    try:
        cfg = PipelineConfig.model_validate(data)
    except (ValidationError, ValueError) as err:
        raise ConfigInvalid(str(err)) from None
    return cfg.resolved(base_dir) if base_dir is not None else cfg


def load_config(path) -> PipelineConfig:
    """Read and validate a YAML config file."""
    path = pathlib.Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as err:
        raise ConfigInvalid(f"{path}: cannot read config ({err})") from None
    except yaml.YAMLError as err:
        raise ConfigInvalid(f"{path}: invalid YAML ({err})") from None
    return parse_config(data if data is not None else {}, base_dir=path.parent)


def config_digest(cfg: PipelineConfig) -> str:
    """sha256 of the canonical (sorted-key) JSON form of the config."""
    blob = orjson.dumps(cfg.model_dump(mode="json"), option=orjson.OPT_SORT_KEYS)
    return hashlib.sha256(blob).hexdigest()


def tool_version() -> str:
    return f"embodiswap {__version__}"
