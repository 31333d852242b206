#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
CLI dashboard for summarizing a run manifest and its frame traces.
"""

import argparse
import pathlib
from collections import Counter

import orjson
import pandas as pd


def load_manifest(path):
    """Load manifest.json into a dict, or None with an error message."""
    try:
        return orjson.loads(pathlib.Path(path).read_bytes())
    except FileNotFoundError:
        print(f"ERROR: File not found: {path}")
        return None
    except orjson.JSONDecodeError as e:
        print(f"ERROR: JSON decode error in {path}: {e}")
        return None


def load_jsonl(path):
    """Load JSONL file into list of dictionaries."""
    try:
        return [orjson.loads(line) for line in pathlib.Path(path).read_bytes().splitlines() if line.strip()]
    except FileNotFoundError:
        print(f"ERROR: File not found: {path}")
        return []
    except orjson.JSONDecodeError as e:
        print(f"ERROR: JSON decode error in {path}: {e}")
        return []


def manifest_table(manifest) -> pd.DataFrame:
    """One row per clip with the counts that must reconcile."""
    rows = []
    for c in manifest.get("clips", []):
        excluded = c.get("excluded", {})
        rows.append({
            "clip": c["clip"],
            "status": c["status"],
            "frames": c.get("frame_count", 0),
            "labels": c.get("labels_emitted", 0),
            "composites": c.get("composites_written", 0),
            "excluded": sum(excluded.values()),
            "out_of_span": c.get("out_of_span", 0),
            "mask_iou": c.get("mask_iou_mean"),
            **{f"x:{reason}": n for reason, n in excluded.items()},
        })
    df = pd.DataFrame(rows)
    if df.empty:
        return df
    reason_cols = sorted(col for col in df.columns if col.startswith("x:"))
    if reason_cols:
        df[reason_cols] = df[reason_cols].fillna(0).astype(int)
    df["mask_iou"] = pd.to_numeric(df["mask_iou"])
    df["reconciles"] = df["labels"] + df["excluded"] + df["out_of_span"] == df["frames"]
    return df


def summarize_manifest(path="out/manifest.json") -> bool:
    """
    Print a per-clip table and run totals.

    Returns:
        True when every clip succeeded and reconciles
    """
    print("RUN MANIFEST SUMMARY")
    print("=" * 50)

    manifest = load_manifest(path)
    if manifest is None:
        return False
    print(f"Tool:   {manifest.get('tool_version')}")
    print(f"Config: {manifest.get('config_digest', '')[:12]}")
    print(f"Mode:   {manifest.get('mode')}")

    df = manifest_table(manifest)
    if df.empty:
        print("No clips in manifest")
        return True

    print()
    with pd.option_context("display.max_columns", None, "display.width", 160):
        print(df.to_string(index=False))

    ok = df[df["status"] == "ok"]
    print("\nTOTALS")
    print("-" * 30)
    print(f"Clips:       {len(df)} ({len(df) - len(ok)} failed)")
    print(f"Frames:      {int(df['frames'].sum())}")
    print(f"Labels:      {int(ok['labels'].sum())}")
    print(f"Composites:  {int(ok['composites'].sum())}")
    for col in sorted(c for c in df.columns if c.startswith("x:")):
        print(f"Excluded {col[2:]}: {int(ok[col].sum())}")
    if ok["mask_iou"].notna().any():
        print(f"Mask IoU:    {ok['mask_iou'].mean():.3f} (mean over clips with masks)")

    failed = df[df["status"] == "failed"]
    if not failed.empty:
        print("\nFAILED CLIPS")
        print("-" * 30)
        errors = {c["clip"]: c.get("error") for c in manifest["clips"]}
        for name in failed["clip"]:
            print(f"   • {name}: {errors.get(name)}")

    return failed.empty and bool(ok["reconciles"].all())


def analyze_traces(traces_file="out/runs.jsonl"):
    """Per-step counts and latency from the frame trace file."""
    print("\nTRACE ANALYSIS")
    print("=" * 50)

    traces = load_jsonl(traces_file)
    if not traces:
        print(f"No traces found in {traces_file}")
        return

    df = pd.DataFrame({"name": [t.get("name", "unknown") for t in traces],
                       "latency_ms": [t.get("latency_ms", 0) for t in traces]})
    print(f"Total records: {len(df)}")
    print(df.groupby("name")["latency_ms"].agg(["count", "mean", "max"]).round(1).to_string())

    ik = [t["output"] for t in traces if t.get("name") == "ik"]
    if ik:
        accepted = Counter(bool(o.get("accepted")) for o in ik)
        print(f"\nIK accepted: {accepted[True]}/{len(ik)}")


def main():
    parser = argparse.ArgumentParser(description="Summarize a run manifest and frame traces")
    parser.add_argument("manifest", nargs="?", default="out/manifest.json", help="manifest.json from a run")
    parser.add_argument("--traces", default="out/runs.jsonl", help="Trace file written during the run")
    parser.add_argument("--no-traces", action="store_true", help="Skip trace analysis")
    args = parser.parse_args()

    ok = summarize_manifest(args.manifest)
    if not args.no_traces and pathlib.Path(args.traces).exists():
        analyze_traces(args.traces)
    raise SystemExit(0 if ok else 1)


if __name__ == "__main__":
    main()
