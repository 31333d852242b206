"""
Shared fixtures: fixture robots, a canonical hand and synthetic clip bundles.

The synthetic clip is built so every expected number is known in closed
form. The hand of frame 0 is HAND_TEMPLATE placed with its palm center at
(0, 0, 0.6) in front of the camera. Frame t moves that hand rigidly so the
gripper pose of frame t is exactly what the two-link planar arm reaches at
joint angles (theta_t, 0) once its base is home-anchored at frame 0. The
relative label between frames with angles a and b is then a rotation by
b - a about z with translation (cos(b - a) - 1, sin(b - a), 0).
"""

import pathlib
from typing import Mapping, Optional, Sequence

import numpy as np
import orjson
import pytest

from src import tracer
from src.config import parse_config
from src.evals.metrics import HAND_TEMPLATE
from src.geometry import SE3, CameraIntrinsics, rotation_about, se3_to_list, transform_points
from src.io_formats import encode_pfm, encode_png, frame_name
from src.pipeline import ClipInputBundle
from src.retarget import HandKeypoints, HandSide, retarget_pose

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

# Palm center of HAND_TEMPLATE is (0.052, 0.026, 0); this puts it at (0, 0, 0.6)
HAND_OFFSET = np.array([-0.052, -0.026, 0.6])

SMALL_CAMERA = CameraIntrinsics(fx=20.0, fy=20.0, cx=15.5, cy=11.5, width=32, height=24)
SCENE_DEPTH = 2.0
SCENE_GRAY = 128


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="Run the full-size acceptance sweeps")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="full-size sweep, use --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def no_traces():
    """Keep tests from leaving trace files behind."""
    previous = tracer.LOG
    tracer.configure(None)
    yield
    tracer.LOG = previous


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def canonical_hand(side: HandSide = HandSide.RIGHT) -> HandKeypoints:
    return HandKeypoints(HAND_TEMPLATE + HAND_OFFSET, side)


def planar_motion(theta: float) -> SE3:
    """World motion that swings the frame-0 gripper about the anchored base of the planar arm."""
    g0 = retarget_pose(canonical_hand()).pose
    base = g0 @ SE3.from_translation([-1.0, 0.0, 0.0])
    return base @ SE3.from_rotation(rotation_about([0, 0, 1], theta)) @ base.inverse()


def write_bundle(
    root: pathlib.Path,
    thetas: Sequence[float] = (0.0, 0.1, 0.2),
    span=(0, 3),
    action: str = "open",
    degenerate: Sequence[int] = (),
    shift: Optional[Mapping[int, Sequence[float]]] = None,
    skip_depth: Sequence[int] = (),
    camera_poses: Optional[Sequence[SE3]] = None,
    masks: bool = False,
    intrinsics: CameraIntrinsics = SMALL_CAMERA,
) -> ClipInputBundle:
    """
    Write a synthetic clip bundle with one frame per entry of `thetas`.

    Args:
        degenerate: frames whose hand collapses to a single point
        shift: frame -> extra camera-frame translation of that frame's hand
        skip_depth: frames written without a depth map
        camera_poses: per-frame world_from_camera (identity by default);
            hand keypoints are expressed in each frame's camera
        masks: also write an all-False body mask per frame
    """
    root = pathlib.Path(root)
    for sub in ("frames", "depth", "masks"):
        (root / sub).mkdir(parents=True, exist_ok=True)

    h, w = intrinsics.height, intrinsics.width
    rgb = np.full((h, w, 3), SCENE_GRAY, np.uint8)
    depth = np.full((h, w), SCENE_DEPTH, np.float32)
    hand0 = canonical_hand()

    hands, cameras = [], []
    for i, theta in enumerate(thetas):
        (root / "frames" / frame_name(i, ".png")).write_bytes(encode_png(rgb))
        if i not in skip_depth:
            (root / "depth" / frame_name(i, ".pfm")).write_bytes(encode_pfm(depth))
        if masks:
            (root / "masks" / frame_name(i, ".png")).write_bytes(encode_png(np.zeros((h, w), bool)))

        world_from_camera = camera_poses[i] if camera_poses is not None else SE3.identity()
        pts = transform_points(world_from_camera.inverse() @ planar_motion(theta), hand0.points)
        if shift and i in shift:
            pts = pts + np.asarray(shift[i], dtype=np.float64)
        if i in degenerate:
            pts = np.tile(pts[0], (21, 1))
        hands.append({"frame": i, "side": "right", "keypoints": pts.tolist()})
        cameras.append({"frame": i, "intrinsics": intrinsics.to_record(),
                        "world_from_camera": se3_to_list(world_from_camera)})

    (root / "hands.jsonl").write_bytes(b"".join(orjson.dumps(r) + b"\n" for r in hands))
    (root / "camera.jsonl").write_bytes(b"".join(orjson.dumps(r) + b"\n" for r in cameras))
    annotation = {"video_id": root.name, "action": action, "dominant_hand": "right",
                  "sub_actions": [{"name": "grasp", "start": span[0], "end": span[1], "used": True}]}
    (root / "annotation.json").write_bytes(orjson.dumps(annotation))
    return ClipInputBundle.at(root)


@pytest.fixture
def make_bundle(tmp_path):
    """Factory: make_bundle(name, **write_bundle kwargs) -> ClipInputBundle under tmp_path."""
    def _make(name: str = "clip_a", **kwargs) -> ClipInputBundle:
        return write_bundle(tmp_path / "bundles" / name, **kwargs)
    return _make


@pytest.fixture
def make_config(tmp_path):
    """Factory: a PipelineConfig for the planar arm writing under tmp_path/out."""
    def _make(**overrides):
        data = {
            "urdf": str(FIXTURES / "two_link_planar.urdf"),
            "lookahead": {"open": 1, "close": 2},
            "output_dir": str(tmp_path / "out"),
            "trace_path": None,
        }
        data.update(overrides)
        return parse_config(data)
    return _make
