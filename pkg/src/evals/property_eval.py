"""
Acceptance sweeps for the geometry, kinematics, retargeting, rendering and
label cores.

Each sweep draws many random cases, checks every case against its reference
(group laws, finite differences, brute-force ray casting, FK round trips,
label algebra), prints error statistics and then enforces its pass
threshold. The default case counts are the full acceptance sizes; the unit
tests pin exact values on a handful of cases instead.

Run with: python -m src.evals.property_eval            (exit code 1 on any failure)
"""

import pathlib
import time
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np
import orjson
from tqdm import tqdm

from src.errors import DegenerateHand
from src.evals.metrics import (
    HAND_TEMPLATE,
    determinant_error,
    jacobian_fd_error,
    orthonormality_error,
    pose_distance,
    random_chain_urdf,
    random_config,
    random_hand,
    random_rotation,
    random_se3,
    random_triangle_scene,
    raycast_oracle,
    rotation_distance,
    summarize,
)
from src.geometry import SE3, CameraIntrinsics, axis_angle_to_rotation, rotation_to_axis_angle, se3_relative
from src.kinematics import link_pose, solve_ik, within_limits
from src.labels import TrajectoryFrame, make_label
from src.mesh import Mesh, vertex_normals
from src.render import RenderInstance, RenderScene, rasterize
from src.retarget import HandKeypoints, HandSide, gripper_center, retarget_pose
from src.urdf import load_urdf, parse_urdf

FIXTURES = pathlib.Path(__file__).parent / "fixtures"

Rows = List[dict]


@dataclass(frozen=True)
class Sweep:
    fn: Callable[[np.random.Generator, int], Rows]
    cases: int
    check: Callable[[Rows], List[str]]


def _max_at_most(rows: Rows, key: str, bound: float) -> List[str]:
    worst = max((r[key] for r in rows), default=0.0)
    return [] if worst <= bound else [f"max {key} {worst:.3g} > {bound:g}"]


# =============================================================================
# Sweeps
# =============================================================================


def se3_laws(rng, n):
    """Inverse and associativity residuals on random poses."""
    rows = []
    for _ in range(n):
        a, b, c = random_se3(rng), random_se3(rng), random_se3(rng)
        inv = np.abs((a @ a.inverse()).matrix() - np.eye(4)).max()
        assoc = np.abs(((a @ b) @ c).matrix() - (a @ (b @ c)).matrix()).max()
        rel = np.abs((a @ se3_relative(a, b)).matrix() - b.matrix()).max()
        rows.append({"inverse": float(inv), "assoc": float(assoc), "relative": float(rel)})
    return rows


def axis_angle_round_trip(rng, n):
    """Rotation -> axis-angle -> rotation, including angles close to pi."""
    rows = []
    for i in range(n):
        r = random_rotation(rng)
        if i % 4 == 0:
            axis = rng.normal(size=3)
            r = axis_angle_to_rotation(axis / np.linalg.norm(axis) * (np.pi - rng.uniform(0, 1e-6)))
        back = axis_angle_to_rotation(rotation_to_axis_angle(r))
        rows.append({"angle_error": rotation_distance(r, back),
                     "orthonormality": orthonormality_error(back), "det": determinant_error(back)})
    return rows


def retarget_correctness(rng, n):
    """Worked example on the template hand, then proper rotations on n random hands per side."""
    pose = retarget_pose(HandKeypoints(HAND_TEMPLATE, HandSide.RIGHT)).pose
    template_error = max(
        float(np.abs(gripper_center(HandKeypoints(HAND_TEMPLATE, HandSide.RIGHT)) - [0.052, 0.026, 0.0]).max()),
        float(np.abs(pose.rotation[:, 2] - [0.0, 0.0, 1.0]).max()),
        float(np.abs(pose.rotation[:, 1] - [-0.447, 0.894, 0.0]).max()),
    )
    rows = [{"template_error": template_error, "orthonormality": 0.0, "det": 0.0}]
    for side in (HandSide.RIGHT, HandSide.LEFT):
        for _ in range(n):
            try:
                r = retarget_pose(random_hand(rng, side)).pose.rotation
            except DegenerateHand:
                continue
            rows.append({"template_error": 0.0, "orthonormality": orthonormality_error(r),
                         "det": determinant_error(r)})
    return rows


def retarget_equivariance(rng, n):
    """Moving the hand rigidly moves the gripper frame by the same transform."""
    rows = []
    for i in range(n):
        side = HandSide.RIGHT if i % 2 == 0 else HandSide.LEFT
        hand = random_hand(rng, side)
        motion = random_se3(rng, 0.2)
        try:
            before = retarget_pose(hand).pose
            after = retarget_pose(hand.transformed(motion)).pose
        except DegenerateHand:
            continue
        rows.append({"error": float(np.abs((motion @ before).matrix() - after.matrix()).max())})
    return rows


def jacobian_vs_fd(rng, n, configs=10):
    rows = []
    for _ in range(n):
        model = parse_urdf(random_chain_urdf(rng, int(rng.integers(1, 9))), end_effector="tool")
        err = max(jacobian_fd_error(model, random_config(model, rng, margin=0.01)) for _ in range(configs))
        rows.append({"dof": model.dof, "fd_error": err})
    return rows


def ik_convergence(rng, n):
    """FK targets solved again from perturbed seeds on the six-dof fixture arm."""
    arm = load_urdf(FIXTURES / "six_dof_arm.urdf", end_effector="tool0")
    locked = {"finger_left_joint": 0.02, "finger_right_joint": 0.02}
    rows = []
    for _ in range(n):
        q_true = random_config(arm, rng)
        q_true[6:] = 0.02
        target = link_pose(arm, q_true)
        seed = q_true + rng.uniform(-0.2, 0.2, arm.dof)
        t0 = time.perf_counter()
        res = solve_ik(arm, target, seed, locked=locked)
        dt, dr = pose_distance(link_pose(arm, res.config), target)
        rows.append({"reached": int(dt <= 1e-3 and dr <= 1e-2), "limit_violation": int(not within_limits(arm, res.config)),
                     "iterations": res.iterations, "pos_error": dt, "rot_error": dr,
                     "ms": 1000 * (time.perf_counter() - t0)})
    return rows


def raycast_agreement(rng, n):
    """Rasterized depth and coverage against one ray per pixel, away from edges."""
    camera = CameraIntrinsics(60.0, 60.0, 31.5, 31.5, 64, 64)
    rows = []
    for _ in range(n):
        meshes = []
        for tri in random_triangle_scene(rng, int(rng.integers(1, 51)), camera):
            faces = np.array([[0, 1, 2]])
            meshes.append(Mesh(tri, faces, vertex_normals(tri, faces)))
        scene = RenderScene([RenderInstance(m, SE3.identity()) for m in meshes], camera)
        out = rasterize(scene, bands=int(rng.integers(1, 5)))
        depth, coverage, comparable = raycast_oracle(scene)
        hit = comparable & coverage & out.coverage
        rows.append({"coverage_mismatch": int(np.count_nonzero(out.coverage[comparable] != coverage[comparable])),
                     "depth_error": float(np.abs(out.depth[hit] - depth[hit]).max(initial=0.0))})
    return rows


def label_algebra(rng, n):
    """Label composition over 2k frames, and invariance to added camera ego-motion."""
    rows = []
    for _ in range(n):
        k = int(rng.integers(1, 5))
        world = [random_se3(rng, 0.5) for _ in range(2 * k + 1)]
        static = [TrajectoryFrame(i, g, SE3.identity()) for i, g in enumerate(world)]
        whole = make_label(static, 0, 2 * k).to_se3()
        halves = make_label(static, 0, k).to_se3() @ make_label(static, k, k).to_se3()

        cams = [random_se3(rng, 2.0) for _ in world]
        moving = [TrajectoryFrame(i, c.inverse() @ g, c) for i, (g, c) in enumerate(zip(world, cams))]
        a, b = make_label(static, 0, k), make_label(moving, 0, k)
        rows.append({
            "composition": float(np.abs(whole.matrix() - halves.matrix()).max()),
            "ego_motion": float(max(np.abs(np.subtract(a.translation, b.translation)).max(),
                                    np.abs(np.subtract(a.rotation, b.rotation)).max())),
        })
    return rows


SWEEPS: Dict[str, Sweep] = {
    "se3": Sweep(se3_laws, 1000, lambda rows: _max_at_most(rows, "inverse", 1e-12)
                 + _max_at_most(rows, "assoc", 1e-12) + _max_at_most(rows, "relative", 1e-12)),
    "axis_angle": Sweep(axis_angle_round_trip, 1000, lambda rows: _max_at_most(rows, "angle_error", 1e-8)
                        + _max_at_most(rows, "orthonormality", 1e-9)),
    "retarget": Sweep(retarget_correctness, 10_000, lambda rows: _max_at_most(rows, "template_error", 1e-3)
                      + _max_at_most(rows, "orthonormality", 1e-6) + _max_at_most(rows, "det", 1e-6)),
    "equivariance": Sweep(retarget_equivariance, 1000, lambda rows: _max_at_most(rows, "error", 1e-9)),
    "jacobian": Sweep(jacobian_vs_fd, 100, lambda rows: _max_at_most(rows, "fd_error", 1e-5)),
    "ik": Sweep(ik_convergence, 200, lambda rows: (
        [] if sum(r["reached"] for r in rows) >= 0.95 * len(rows)
        else [f"only {sum(r['reached'] for r in rows)}/{len(rows)} targets reached"])
        + _max_at_most(rows, "limit_violation", 0)),
    "raycast": Sweep(raycast_agreement, 20, lambda rows: _max_at_most(rows, "coverage_mismatch", 0)
                     + _max_at_most(rows, "depth_error", 1e-4)),
    "labels": Sweep(label_algebra, 1000, lambda rows: _max_at_most(rows, "composition", 1e-9)
                    + _max_at_most(rows, "ego_motion", 1e-9)),
}


def run_sweep(name: str, rng: np.random.Generator, cases=None):
    """Run one sweep and return (rows, failures, seconds)."""
    sweep = SWEEPS[name]
    t0 = time.perf_counter()
    rows = sweep.fn(rng, cases or sweep.cases)
    elapsed = time.perf_counter() - t0
    failures = sweep.check(rows) if rows else ["no cases produced"]
    return rows, failures, elapsed


def run(names, cases=None, seed=0, out="results.jsonl") -> bool:
    """
    Run the selected sweeps, print aggregate errors and check thresholds.

    Args:
        names: keys of SWEEPS to run
        cases: override the per-sweep case count (None keeps the acceptance size)
        seed: RNG seed, so sweeps are reproducible
        out: JSONL file receiving one record per case

    Returns:
        True when every sweep met its threshold
    """
    rng = np.random.default_rng(seed)
    records, failed = [], {}
    for name in tqdm(names, desc="sweeps"):
        rows, failures, elapsed = run_sweep(name, rng, cases)
        records += [{"sweep": name, **r} for r in rows]

        print(f"\n{name}: {len(rows)} cases in {elapsed:.2f}s  {'FAIL' if failures else 'ok'}")
        for key in [k for k, v in (rows[0] if rows else {}).items() if isinstance(v, (int, float))]:
            stats = summarize([r[key] for r in rows])
            print(f"  {key}: mean {stats['mean']:.3g}  p95 {stats['p95']:.3g}  max {stats['max']:.3g}")
        for f in failures:
            print(f"  ✗ {f}")
        if failures:
            failed[name] = failures

    pathlib.Path(out).write_bytes(b"".join(orjson.dumps(r) + b"\n" for r in records))
    print(f"\nWrote {len(records)} records to {out}")
    if failed:
        print(f"FAILED: {', '.join(sorted(failed))}")
    return not failed


if __name__ == "__main__":
    import argparse
    ap = argparse.ArgumentParser()

    # Which sweeps to run
    ap.add_argument("--sweep", choices=sorted(SWEEPS), action="append",
                    help="Repeat to run several; default runs all")

    # Case count override and reproducibility
    ap.add_argument("-n", type=int, default=None, help="Cases per sweep (default: acceptance size)")
    ap.add_argument("--seed", type=int, default=0)

    ap.add_argument("--out", default="results.jsonl")

    args = ap.parse_args()
    raise SystemExit(0 if run(args.sweep or list(SWEEPS), cases=args.n, seed=args.seed, out=args.out) else 1)
