"""
Command-line entry point.

    embodiswap validate <bundle> [<bundle> ...] [--labels-only]
    embodiswap composite --config cfg.yaml --clips <bundle|list.txt> ...
    embodiswap labels    --config cfg.yaml --clips <bundle|list.txt> ...
    embodiswap render-pose --urdf robot.urdf --pose <16 numbers> --out render.png
    embodiswap summary out/manifest.json

Exit codes: 0 success, 1 validation failures or failed clips, 2 configuration
error (bad config file, URDF that cannot be loaded).
"""

import argparse
import logging
import pathlib
import sys
from typing import List, Optional

from src import __version__
from src.config import load_config
from src.dashboards.summarize_manifest import summarize_manifest
from src.errors import ConfigInvalid, EmbodiSwapError, UrdfLoadFailure
from src.geometry import CameraIntrinsics, se3_from_matrix
from src.io_formats import write_pfm, write_png
from src.mesh import DEFAULT_COLOR
from src.pipeline import ClipInputBundle, manifest_path, render_pose, run, validate_bundle
from src.robot import load_robot

logger = logging.getLogger("embodiswap")

EXIT_OK, EXIT_FAILURES, EXIT_CONFIG = 0, 1, 2


def expand_clips(items: List[str]) -> List[pathlib.Path]:
    """Bundle directories, where a plain file lists one bundle path per line (# comments allowed)."""
    out = []
    for item in items:
        p = pathlib.Path(item)
        if p.is_file():
            for line in p.read_text(encoding="utf-8").splitlines():
                line = line.split("#", 1)[0].strip()
                if line:
                    q = pathlib.Path(line)
                    out.append(q if q.is_absolute() else p.parent / q)
        else:
            out.append(p)
    return out


def cmd_validate(args) -> int:
    failures = 0
    for path in expand_clips(args.bundles):
        report = validate_bundle(ClipInputBundle.at(path), labels_only=args.labels_only)
        print(report.summary())
        for f in report.findings:
            where = "bundle" if f.frame is None else f"frame {f.frame}"
            flag = "" if f.blocking else " (out of span)"
            print(f"  {f.kind:<18} {where}{flag}: {f.detail}")
        failures += not report.ok
    return EXIT_FAILURES if failures else EXIT_OK


def cmd_run(args, mode: str) -> int:
    cfg = load_config(args.config)
    if args.output_dir:
        cfg = cfg.model_copy(update={"output_dir": str(pathlib.Path(args.output_dir).resolve())})
    if args.workers:
        cfg = cfg.model_copy(update={"workers": args.workers})
    manifest = run(cfg, expand_clips(args.clips), mode=mode, progress=not args.quiet)

    print(f"{'Clip':<24} {'Status':<8} {'Frames':>6} {'Labels':>6} {'Composites':>10} {'Excluded':>8}")
    print("-" * 68)
    for c in manifest.clips:
        print(f"{c.clip:<24} {c.status:<8} {c.frame_count:>6} {c.labels_emitted:>6} "
              f"{c.composites_written:>10} {sum(c.excluded.values()):>8}")
    print(f"\nManifest written to {manifest_path(cfg.output_dir, mode)}")
    return EXIT_FAILURES if manifest.failed else EXIT_OK


def cmd_render_pose(args) -> int:
    cfg = load_config(args.config) if args.config else None
    end_effector = args.end_effector or (cfg.end_effector if cfg else None)
    mesh_roots = cfg.mesh_roots if cfg else None
    color = cfg.robot_color if cfg else DEFAULT_COLOR
    robot = load_robot(args.urdf, end_effector, mesh_roots, color)
    try:
        pose = se3_from_matrix(args.pose)
    except EmbodiSwapError as err:
        raise ConfigInvalid(f"--pose: {err}") from None
    fx = args.fx
    fy = args.fy if args.fy is not None else fx
    cx = args.cx if args.cx is not None else (args.width - 1) / 2.0
    cy = args.cy if args.cy is not None else (args.height - 1) / 2.0
    try:
        k = CameraIntrinsics(fx, fy, cx, cy, args.width, args.height)
    except EmbodiSwapError as err:
        raise ConfigInvalid(f"camera: {err}") from None

    render = render_pose(robot, pose, k, cfg)
    write_png(args.out, render.rgb)
    if args.depth_out:
        write_pfm(args.depth_out, render.depth)
    print(f"Rendered {int(render.coverage.sum())} robot pixels to {args.out}")
    return EXIT_OK


def cmd_summary(args) -> int:
    return EXIT_OK if summarize_manifest(args.manifest) else EXIT_FAILURES


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embodiswap",
        description="Composite robots into egocentric human clips and generate relative pose labels",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="No progress bars, warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="Check clip bundles for missing or corrupt inputs")
    p.add_argument("bundles", nargs="+", help="Bundle directories or files listing them")
    p.add_argument("--labels-only", action="store_true", help="Skip image and depth decoding")

    for name, help_text in (("composite", "Render, composite and label clips"),
                            ("labels", "Recompute labels only (no rendering)")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="YAML pipeline config")
        p.add_argument("--clips", nargs="+", required=True, help="Bundle directories or files listing them")
        p.add_argument("--output-dir", help="Override output_dir from the config")
        p.add_argument("--workers", type=int, help="Override the number of clips processed in parallel")

    p = sub.add_parser("render-pose", help="Debug render of the robot at one gripper pose")
    p.add_argument("--urdf", required=True, help="Robot URDF")
    p.add_argument("--pose", type=float, nargs=16, required=True, metavar="M",
                   help="Gripper pose in the camera frame, 16 numbers row-major")
    p.add_argument("--out", required=True, help="Output PNG")
    p.add_argument("--depth-out", help="Optional output PFM with the rendered depth")
    p.add_argument("--config", help="Optional pipeline config (ee_offset, light, gripper joints, ...)")
    p.add_argument("--end-effector", help="End-effector link (default: deepest leaf)")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--fx", type=float, default=500.0)
    p.add_argument("--fy", type=float, default=None, help="Defaults to fx")
    p.add_argument("--cx", type=float, default=None, help="Defaults to the image center")
    p.add_argument("--cy", type=float, default=None, help="Defaults to the image center")

    p = sub.add_parser("summary", help="Tabulate a run manifest")
    p.add_argument("manifest", help="manifest.json (composite) or manifest.labels.json (labels)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else (logging.WARNING if args.quiet else logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        if args.command == "validate":
            return cmd_validate(args)
        if args.command in ("composite", "labels"):
            return cmd_run(args, args.command)
        if args.command == "render-pose":
            return cmd_render_pose(args)
        return cmd_summary(args)
    except (ConfigInvalid, UrdfLoadFailure) as err:
        logger.error("%s", err)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
