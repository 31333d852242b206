"""
Tests for the trace log and the manifest summary dashboard.

Run with: python -m pytest src/evals/test_reporting.py -v
"""

import threading

import numpy as np
import orjson

from src import tracer
from src.dashboards.summarize_manifest import manifest_table, summarize_manifest
from src.io_formats import write_json


def _manifest(*clips):
    return {"tool_version": "embodiswap 0.1.0", "config_digest": "ab" * 32, "mode": "composite",
            "clips": list(clips)}


def _clip(name, status="ok", frames=10, labels=6, excluded=None, out_of_span=0, iou=None):
    return {"clip": name, "status": status, "frame_count": frames, "labels_emitted": labels,
            "composites_written": labels, "excluded": excluded or {}, "out_of_span": out_of_span,
            "mask_iou_mean": iou, "error": None if status == "ok" else "BundleInvalid: missing-depth@3"}


def test_trace_appends_records(tmp_path):
    """Records append in order with numpy values serialized."""
    path = tmp_path / "runs.jsonl"
    tracer.configure(path)
    tracer.trace("ik", {"clip": "c", "frame": 3}, {"residual_pos": np.float64(1e-5), "q": np.zeros(2)})
    tracer.trace("composite", {"clip": "c", "frame": 3}, {"mask_iou": None}, meta={"bands": 2})
    records = [orjson.loads(line) for line in path.read_bytes().splitlines()]
    assert [r["name"] for r in records] == ["ik", "composite"]
    assert records[0]["output"]["q"] == [0.0, 0.0]
    assert records[1]["meta"] == {"bands": 2}
    assert records[0]["id"] != records[1]["id"]


def test_trace_disabled_writes_nothing(tmp_path):
    """With tracing off nothing is written."""
    tracer.configure(None)
    tracer.trace("ik", {}, {})
    assert list(tmp_path.iterdir()) == []


def test_concurrent_traces_stay_line_aligned(tmp_path):
    """Threads writing at once never interleave within a line."""
    path = tmp_path / "runs.jsonl"
    tracer.configure(path)
    threads = [threading.Thread(target=lambda i=i: [tracer.trace("ik", {"t": i}, {"n": n}) for n in range(50)])
               for i in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    lines = path.read_bytes().splitlines()
    assert len(lines) == 200
    assert all(orjson.loads(line)["name"] == "ik" for line in lines)


def test_manifest_table_reconciles():
    """One row per clip, one column per exclusion reason, every row reconciling."""
    table = manifest_table(_manifest(
        _clip("a", excluded={"no-future-frame": 2, "degenerate-hand": 1}, out_of_span=1),
        _clip("b", labels=9, excluded={"no-future-frame": 1}),
    ))
    assert list(table["clip"]) == ["a", "b"]
    assert list(table["x:degenerate-hand"]) == [1, 0]
    assert table["reconciles"].all()


def test_summarize_manifest(tmp_path, capsys):
    """Summary succeeds on a clean manifest and fails on a failed clip or a missing file."""
    path = tmp_path / "manifest.json"
    write_json(path, _manifest(_clip("a", excluded={"no-future-frame": 4}, iou=0.5)))
    assert summarize_manifest(path)
    out = capsys.readouterr().out
    assert "Mask IoU" in out and "Excluded no-future-frame: 4" in out

    write_json(path, _manifest(_clip("a", excluded={"no-future-frame": 4}),
                               _clip("b", status="failed", labels=0)))
    assert not summarize_manifest(path)
    assert "FAILED CLIPS" in capsys.readouterr().out
    assert not summarize_manifest(tmp_path / "missing.json")
