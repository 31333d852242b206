"""
Clip processing: ingest -> retarget -> IK -> render -> blend -> labels -> emit.

A clip bundle is one directory:

    frames/NNNNNN.png     actor-erased RGB frames
    depth/NNNNNN.pfm      metric scene depth (meters)
    masks/NNNNNN.png      optional erased-body masks (validation only)
    hands.jsonl           {"frame", "side", "keypoints": [[x, y, z] x 21]}
    camera.jsonl          {"frame", "intrinsics": {...}, "world_from_camera": [16]}
    annotation.json       one Therblig annotation record

and produces, under <output_dir>/<clip>/:

    composite/NNNNNN.png  robot composited into the scene
    robot_mask/NNNNNN.png where the robot won the depth test (optional)
    labels.jsonl          {"frame", "k", "t", "r", "convention"} per label
    episode.json          first -> last usable frame label

plus a run manifest: <output_dir>/manifest.json for composite runs and
<output_dir>/manifest.labels.json for labels-only runs, so one never
replaces the other.

Every in-span frame ends up either labelled or excluded with a reason, so
labels_emitted + sum(excluded) + out_of_span == frame_count per clip.
"""

from __future__ import annotations

import logging
import pathlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from src import tracer
from src.clips import ClipSpan, TherbligAnnotation, load_annotation, slice_clip
from src.composite import SceneFrame, blend, mask_agreement
from src.config import PipelineConfig, config_digest, tool_version
from src.errors import (
    AnnotationError,
    BundleInvalid,
    CorruptFile,
    DegenerateHand,
    EmbodiSwapError,
    GeometryError,
    HandError,
)
from src.geometry import SE3, CameraIntrinsics, se3_from_matrix
from src.io_formats import (
    frame_name,
    iter_jsonl,
    png_size,
    read_pfm,
    read_png_mask,
    read_png_rgb,
    write_json,
    write_jsonl,
    write_png,
)
from src.kinematics import solve_ik
from src.labels import TrajectoryFrame, episode_label, label_clip
from src.render import NEAR_PLANE, RgbdRender
from src.retarget import HandKeypoints, HandSide, check_hand_scale, retarget_many
from src.robot import Robot, anchor_base, ik_target, load_robot, render_robot

logger = logging.getLogger(__name__)

FindingKind = Literal[
    "missing-annotation", "corrupt-annotation", "corrupt-hands", "corrupt-camera",
    "missing-frame", "corrupt-frame", "missing-depth", "corrupt-depth",
    "missing-hand", "missing-camera", "size-mismatch",
]
ExclusionReason = Literal["missing-input", "degenerate-hand", "ik-unreachable", "no-future-frame"]
Mode = Literal["composite", "labels"]


# =============================================================================
# Records
# =============================================================================


class Finding(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: FindingKind
    frame: Optional[int] = None  # None for bundle-level problems
    in_span: bool = True
    detail: str = ""

    @property
    def blocking(self) -> bool:
        return self.frame is None or self.in_span


class ValidationReport(BaseModel):
    bundle: str
    ok: bool
    span: Optional[Tuple[int, int]] = None
    frame_count: int = 0
    findings: List[Finding] = Field(default_factory=list)

    def summary(self) -> str:
        blocking = [f for f in self.findings if f.blocking]
        if not blocking:
            return f"{self.bundle}: ok ({self.frame_count} frames, {len(self.findings)} out-of-span findings)"
        head = ", ".join(f"{f.kind}@{f.frame}" for f in blocking[:5])
        more = f" (+{len(blocking) - 5} more)" if len(blocking) > 5 else ""
        return f"{self.bundle}: {len(blocking)} blocking findings: {head}{more}"


class ExcludedFrame(BaseModel):
    frame: int
    reason: ExclusionReason


class ClipEntry(BaseModel):
    clip: str
    status: Literal["ok", "failed"] = "ok"
    error: Optional[str] = None
    frame_count: int = 0
    out_of_span: int = 0
    composites_written: int = 0
    labels_emitted: int = 0
    excluded: Dict[str, int] = Field(default_factory=dict)
    excluded_frames: List[ExcludedFrame] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    mask_iou_mean: Optional[float] = None
    config_digest: str = ""
    tool_version: str = ""

    def reconciles(self) -> bool:
        return self.labels_emitted + sum(self.excluded.values()) + self.out_of_span == self.frame_count


class DatasetManifest(BaseModel):
    tool_version: str
    config_digest: str
    mode: Mode
    clips: List[ClipEntry] = Field(default_factory=list)

    @property
    def failed(self) -> List[ClipEntry]:
        return [c for c in self.clips if c.status == "failed"]


# =============================================================================
# Bundle ingestion
# =============================================================================


@dataclass(frozen=True)
class CameraRecord:
    intrinsics: CameraIntrinsics
    world_from_camera: SE3


@dataclass(frozen=True)
class ClipInputBundle:
    root: pathlib.Path

    @classmethod
    def at(cls, path) -> "ClipInputBundle":
        return cls(pathlib.Path(path))

    @property
    def name(self) -> str:
        return self.root.resolve().name

    def frame_path(self, i: int) -> pathlib.Path:
        return self.root / "frames" / frame_name(i, ".png")

    def depth_path(self, i: int) -> pathlib.Path:
        return self.root / "depth" / frame_name(i, ".pfm")

    def mask_path(self, i: int) -> pathlib.Path:
        return self.root / "masks" / frame_name(i, ".png")

    @property
    def hands_path(self) -> pathlib.Path:
        return self.root / "hands.jsonl"

    @property
    def camera_path(self) -> pathlib.Path:
        return self.root / "camera.jsonl"

    @property
    def annotation_path(self) -> pathlib.Path:
        return self.root / "annotation.json"

    def frame_indices(self) -> List[int]:
        """Indices of frames/NNNNNN.png, ascending; non-numeric names are ignored."""
        frames_dir = self.root / "frames"
        if not frames_dir.is_dir():
            return []
        return sorted(int(p.stem) for p in frames_dir.glob("*.png") if p.stem.isdigit())


Problems = List[Tuple[Optional[int], str]]


def read_hands(path) -> Tuple[Dict[Tuple[int, HandSide], HandKeypoints], Problems]:
    """Hand records keyed by (frame, side), and the problems met while reading them."""
    hands: Dict[Tuple[int, HandSide], HandKeypoints] = {}
    problems: Problems = []
    try:
        for lineno, rec in iter_jsonl(path):
            frame = rec.get("frame")
            if not isinstance(frame, int) or isinstance(frame, bool):
                problems.append((None, f"line {lineno}: missing integer 'frame'"))
                continue
            try:
                kp = HandKeypoints.from_record(rec)
            except (HandError, KeyError, TypeError, ValueError) as err:
                problems.append((frame, f"line {lineno}: {err}"))
                continue
            if (frame, kp.side) in hands:
                problems.append((frame, f"line {lineno}: duplicate {kp.side.value} hand record"))
                continue
            hands[(frame, kp.side)] = kp
    except CorruptFile as err:
        problems.append((None, str(err)))
    return hands, problems


def read_cameras(path) -> Tuple[Dict[int, CameraRecord], Problems]:
    cameras: Dict[int, CameraRecord] = {}
    problems: Problems = []
    try:
        for lineno, rec in iter_jsonl(path):
            frame = rec.get("frame")
            if not isinstance(frame, int) or isinstance(frame, bool):
                problems.append((None, f"line {lineno}: missing integer 'frame'"))
                continue
            try:
                cam = CameraRecord(CameraIntrinsics.from_record(rec["intrinsics"]),
                                   se3_from_matrix(rec["world_from_camera"]))
            except (GeometryError, KeyError, TypeError, ValueError) as err:
                problems.append((frame, f"line {lineno}: {err}"))
                continue
            if frame in cameras:
                problems.append((frame, f"line {lineno}: duplicate camera record"))
                continue
            cameras[frame] = cam
    except CorruptFile as err:
        problems.append((None, str(err)))
    return cameras, problems


def _effective_span(span: ClipSpan, frames: Sequence[int]) -> Tuple[int, int]:
    """The annotated span clipped to the range of recorded frames (may be empty)."""
    if not frames:
        return span.start_frame, span.start_frame
    start = max(span.start_frame, frames[0])
    end = min(span.end_frame, frames[-1] + 1)
    return start, max(start, end)


def validate_bundle(bundle: ClipInputBundle, labels_only: bool = False) -> ValidationReport:
    """
    List every missing or corrupt artifact of a bundle.

    Args:
        bundle: clip directory
        labels_only: skip image and depth decoding (labels reruns need
            neither)

    Returns:
        ValidationReport; ok is False when any finding lies inside the
        sliced span or concerns the bundle as a whole
    """
    findings: List[Finding] = []
    frames = bundle.frame_indices()

    span: Optional[ClipSpan] = None
    ann: Optional[TherbligAnnotation] = None
    if not bundle.annotation_path.is_file():
        findings.append(Finding(kind="missing-annotation", detail=str(bundle.annotation_path)))
    else:
        try:
            ann = load_annotation(bundle.annotation_path)
            span = slice_clip(ann)
        except (AnnotationError, HandError) as err:
            findings.append(Finding(kind="corrupt-annotation", detail=str(err)))

    if span is not None:
        lo, hi = _effective_span(span, frames)
    else:
        lo, hi = (frames[0], frames[-1] + 1) if frames else (0, 0)

    def add(kind, frame: Optional[int], detail: str = ""):
        in_span = frame is None or lo <= frame < hi
        findings.append(Finding(kind=kind, frame=frame, in_span=in_span, detail=detail))

    if not frames:
        add("missing-frame", None, "frames/ holds no NNNNNN.png images")
    present = set(frames)
    for i in range(lo, hi):
        if i not in present:
            add("missing-frame", i, str(bundle.frame_path(i)))

    if bundle.hands_path.is_file():
        hands, problems = read_hands(bundle.hands_path)
        for frame, detail in problems:
            add("corrupt-hands", frame, detail)
    else:
        hands = {}
        add("corrupt-hands", None, f"{bundle.hands_path} not found")
    if bundle.camera_path.is_file():
        cameras, problems = read_cameras(bundle.camera_path)
        for frame, detail in problems:
            add("corrupt-camera", frame, detail)
    else:
        cameras = {}
        add("corrupt-camera", None, f"{bundle.camera_path} not found")

    bad_hand_frames = {f.frame for f in findings if f.kind == "corrupt-hands"}
    bad_camera_frames = {f.frame for f in findings if f.kind == "corrupt-camera"}
    sides = [ann.dominant_hand] if ann is not None else list(HandSide)

    for i in frames:
        if i not in bad_hand_frames and not any((i, s) in hands for s in sides):
            add("missing-hand", i, f"no {'/'.join(s.value for s in sides)} hand record")
        if i not in cameras and i not in bad_camera_frames:
            add("missing-camera", i)
        if labels_only:
            continue

        try:
            size = png_size(bundle.frame_path(i))
        except CorruptFile as err:
            add("corrupt-frame", i, str(err))
            size = None
        depth_path = bundle.depth_path(i)
        if not depth_path.is_file():
            add("missing-depth", i, str(depth_path))
        else:
            try:
                depth_shape = read_pfm(depth_path).shape
                if size is not None and depth_shape != size:
                    add("size-mismatch", i, f"depth {depth_shape} vs frame {size}")
            except (CorruptFile, OSError) as err:
                add("corrupt-depth", i, str(err))
        cam = cameras.get(i)
        if cam is not None and size is not None and cam.intrinsics.shape != size:
            add("size-mismatch", i, f"intrinsics {cam.intrinsics.shape} vs frame {size}")
        mask_path = bundle.mask_path(i)
        if mask_path.is_file():
            try:
                mask_size = png_size(mask_path)
                if size is not None and mask_size != size:
                    add("size-mismatch", i, f"mask {mask_size} vs frame {size}")
            except CorruptFile as err:
                add("corrupt-frame", i, f"mask: {err}")

    ok = not any(f.blocking for f in findings)
    return ValidationReport(bundle=str(bundle.root), ok=ok,
                            span=(span.start_frame, span.end_frame) if span else None,
                            frame_count=len(frames), findings=findings)


# =============================================================================
# Per-clip processing
# =============================================================================


@dataclass
class _FrameState:
    """Mutable per-frame bookkeeping while a clip is processed."""

    index: int
    camera: Optional[CameraRecord] = None
    gripper_cam: Optional[SE3] = None
    q: Optional[np.ndarray] = None
    reason: Optional[str] = None


def _reason_counts(excluded: Sequence[ExcludedFrame]) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for e in excluded:
        counts[e.reason] = counts.get(e.reason, 0) + 1
    return dict(sorted(counts.items()))


def _solve_trajectory(states: List[_FrameState], robot: Robot, config: PipelineConfig,
                      locked: Dict[str, float], clip: str) -> Optional[SE3]:
    """
    IK over the clip in frame order, each frame seeded with the last accepted solution.

    Returns world_from_base, or None when no frame had a usable gripper pose.
    """
    ee_offset = config.ee_offset_pose()
    q_home = robot.home(config.home, locked)
    world_from_base: Optional[SE3] = None
    seed = q_home
    for st in states:
        if st.reason is not None or st.gripper_cam is None:
            continue
        t0 = time.perf_counter()
        world_from_gripper = st.camera.world_from_camera @ st.gripper_cam
        if world_from_base is None:
            world_from_base = anchor_base(robot, q_home, world_from_gripper,
                                          ee_offset, config.base_offset_pose())
        target = ik_target(world_from_base, world_from_gripper, ee_offset)
        result = solve_ik(robot.model, target, seed, config.ik, locked)
        if result.residual_pos > config.max_ik_residual:
            st.reason = "ik-unreachable"
        else:
            st.q = result.config
            seed = result.config
        tracer.trace("ik", {"clip": clip, "frame": st.index},
                     {"converged": result.converged, "residual_pos": result.residual_pos,
                      "residual_rot": result.residual_rot, "iterations": result.iterations,
                      "accepted": st.q is not None}, t0=t0)
    return world_from_base


def _composite_frame(bundle: ClipInputBundle, out_dir: pathlib.Path, st: _FrameState,
                     robot: Robot, world_from_base: SE3, config: PipelineConfig) -> Optional[float]:
    """Render, blend and write one solved frame; returns the mask IoU when a body mask exists."""
    camera_from_base = st.camera.world_from_camera.inverse() @ world_from_base
    render = render_robot(robot, st.q, camera_from_base, st.camera.intrinsics,
                          config.light, config.near_plane, config.render_bands)
    mask_path = bundle.mask_path(st.index)
    body = read_png_mask(mask_path) if mask_path.is_file() else None
    scene = SceneFrame(read_png_rgb(bundle.frame_path(st.index)),
                       read_pfm(bundle.depth_path(st.index)), body)
    out = blend(scene, render, config.depth_bias)
    write_png(out_dir / "composite" / frame_name(st.index, ".png"), out.rgb)
    if config.write_robot_masks:
        write_png(out_dir / "robot_mask" / frame_name(st.index, ".png"), out.robot_mask)
    return mask_agreement(body, out.robot_mask) if body is not None else None


def process_clip(
    bundle: ClipInputBundle,
    config: PipelineConfig,
    robot: Optional[Robot] = None,
    mode: Mode = "composite",
    progress: bool = False,
) -> ClipEntry:
    """
    Turn one clip bundle into composites, labels and a manifest entry.

    Args:
        bundle: validated clip directory
        config: pipeline configuration
        robot: preloaded robot (loaded from config.urdf when None)
        mode: "composite" renders and writes frames; "labels" only
            recomputes labels.jsonl and episode.json
        progress: show a tqdm bar over frames

    Raises:
        BundleInvalid when validation fails (unless on_missing is "skip"
        and every problem is tied to a frame), UrdfLoadFailure,
        UnknownActionClass
    """
    digest = config_digest(config)
    if robot is None:
        robot = load_robot(config.urdf, config.end_effector, config.mesh_roots, config.robot_color)
    locked = robot.locked_joints(config.gripper_joints, config.locked_joints)

    report = validate_bundle(bundle, labels_only=(mode == "labels"))
    blocked: Set[int] = set()
    if not report.ok:
        if config.on_missing == "skip" and all(f.frame is not None for f in report.findings if f.blocking):
            blocked = {f.frame for f in report.findings if f.blocking}
            logger.warning("%s: skipping %d frames with missing or corrupt inputs", bundle.name, len(blocked))
        else:
            raise BundleInvalid(report.summary(), report)

    ann = load_annotation(bundle.annotation_path)
    span = slice_clip(ann)
    k = config.lookahead.k_for(ann.action)
    frames = bundle.frame_indices()
    lo, hi = _effective_span(span, frames)
    in_span = [i for i in frames if lo <= i < hi]
    entry = ClipEntry(clip=bundle.name, frame_count=len(frames), out_of_span=len(frames) - len(in_span),
                      config_digest=digest, tool_version=tool_version())
    if (lo, hi) != (span.start_frame, span.end_frame):
        entry.warnings.append(f"annotated span [{span.start_frame}, {span.end_frame}) clipped to "
                              f"recorded frames [{lo}, {hi})")
    out_dir = pathlib.Path(config.output_dir) / bundle.name

    hands, _ = read_hands(bundle.hands_path)
    cameras, _ = read_cameras(bundle.camera_path)
    lo_span, hi_span = config.hand_span

    def degenerate(st: _FrameState, err: DegenerateHand):
        st.reason = "degenerate-hand"
        tracer.trace("retarget", {"clip": bundle.name, "frame": st.index}, {"error": str(err)})

    # Retarget every in-span frame whose hand is present and plausibly sized
    states, pending = [], []
    for i in in_span:
        st = _FrameState(i, cameras.get(i))
        kp = hands.get((i, ann.dominant_hand))
        states.append(st)
        if i in blocked or st.camera is None or kp is None:
            st.reason = "missing-input"
            continue
        try:
            check_hand_scale(kp, lo_span, hi_span)
        except DegenerateHand as err:
            degenerate(st, err)
            continue
        pending.append((st, kp))
    for (st, _), result in zip(pending, retarget_many([kp for _, kp in pending])):
        if isinstance(result, DegenerateHand):
            degenerate(st, result)
        else:
            st.gripper_cam = result.pose

    world_from_base = _solve_trajectory(states, robot, config, locked, bundle.name)

    # Composite the frames the robot could reach
    if mode == "composite":
        ious = []
        solved = [st for st in states if st.q is not None]
        for st in tqdm(solved, desc=bundle.name, unit="frame", disable=not progress):
            t0 = time.perf_counter()
            iou = _composite_frame(bundle, out_dir, st, robot, world_from_base, config)
            if iou is not None:
                ious.append(iou)
            tracer.trace("composite", {"clip": bundle.name, "frame": st.index}, {"mask_iou": iou}, t0=t0)
        entry.composites_written = len(solved)
        entry.mask_iou_mean = float(np.mean(ious)) if ious else None

    # Labels over clip positions; frames missing from frames/ still occupy a position
    by_index = {st.index: st for st in states}
    identity = SE3.identity()
    traj = []
    for i in range(lo, hi):
        st = by_index.get(i)
        usable = st is not None and st.q is not None
        traj.append(TrajectoryFrame(
            index=i,
            gripper_pose_cam=st.gripper_cam if usable else None,
            world_from_camera=st.camera.world_from_camera if usable else identity,
            valid=usable,
        ))
    if len(traj) <= k:
        entry.warnings.append(f"clip of {len(traj)} frames is too short for look-ahead {k} ({ann.action})")
    labels = label_clip(traj, ann.action, config.lookahead)
    labelled = {lab.frame_index for lab in labels}
    for st in states:
        if st.reason is None and st.index not in labelled:
            st.reason = "no-future-frame"

    write_jsonl(out_dir / "labels.jsonl", [lab.to_record() for lab in labels])
    episode = episode_label(traj)
    if episode is not None:
        write_json(out_dir / "episode.json", episode.to_record())
    else:
        entry.warnings.append("fewer than two usable frames; no episode label")

    entry.labels_emitted = len(labels)
    entry.excluded_frames = [ExcludedFrame(frame=st.index, reason=st.reason) for st in states if st.reason]
    entry.excluded = _reason_counts(entry.excluded_frames)
    for w in entry.warnings:
        logger.warning("%s: %s", bundle.name, w)
    logger.info("%s: %d labels, %d composites, excluded %s, %d out of span",
                bundle.name, entry.labels_emitted, entry.composites_written, entry.excluded, entry.out_of_span)
    return entry


def _process_safely(bundle: ClipInputBundle, config: PipelineConfig, robot: Robot,
                    mode: Mode, progress: bool) -> ClipEntry:
    """process_clip, turning any clip-level failure into a failed manifest entry."""
    try:
        return process_clip(bundle, config, robot, mode, progress)
    except (EmbodiSwapError, OSError) as err:
        logger.error("%s: %s", bundle.name, err)
        return ClipEntry(clip=bundle.name, status="failed", error=f"{type(err).__name__}: {err}",
                         frame_count=len(bundle.frame_indices()),
                         config_digest=config_digest(config), tool_version=tool_version())


def manifest_path(output_dir, mode: Mode) -> pathlib.Path:
    return pathlib.Path(output_dir) / ("manifest.json" if mode == "composite" else f"manifest.{mode}.json")


def run(config: PipelineConfig, clips: Sequence, mode: Mode = "composite",
        progress: bool = False) -> DatasetManifest:
    """
    Process clips with bounded parallelism and write the run manifest.

    A failing clip is recorded as failed and never stops the others; the
    manifest lists clips in the order given.

    Raises:
        UrdfLoadFailure when the robot cannot be loaded
    """
    tracer.configure(config.trace_file())
    robot = load_robot(config.urdf, config.end_effector, config.mesh_roots, config.robot_color)
    robot.locked_joints(config.gripper_joints, config.locked_joints)  # fail fast on bad joint names
    bundles = [c if isinstance(c, ClipInputBundle) else ClipInputBundle.at(c) for c in clips]

    if config.workers == 1 or len(bundles) <= 1:
        entries = [_process_safely(b, config, robot, mode, progress) for b in bundles]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            entries = list(pool.map(lambda b: _process_safely(b, config, robot, mode, progress), bundles))

    manifest = DatasetManifest(tool_version=tool_version(), config_digest=config_digest(config),
                               mode=mode, clips=entries)
    write_json(manifest_path(config.output_dir, mode), manifest.model_dump(mode="json"))
    logger.info("run finished: %d clips, %d failed", len(entries), len(manifest.failed))
    return manifest


def render_pose(robot: Robot, camera_from_gripper: SE3, intrinsics: CameraIntrinsics,
                config: Optional[PipelineConfig] = None) -> RgbdRender:
    """
    Render the robot home-anchored at one gripper pose (camera frame).

    Debug helper: with the base anchored at the pose, the home
    configuration already puts the gripper there, so no IK is needed.
    """
    ee_offset = config.ee_offset_pose() if config else None
    base_offset = config.base_offset_pose() if config else None
    locked = robot.locked_joints(config.gripper_joints, config.locked_joints) if config else {}
    q = robot.home(config.home if config else None, locked)
    camera_from_base = anchor_base(robot, q, camera_from_gripper, ee_offset, base_offset)
    light = config.light if config else None
    near = config.near_plane if config else NEAR_PLANE
    return render_robot(robot, q, camera_from_base, intrinsics, light, near)
