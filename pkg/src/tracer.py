"""
Tracing system for logging per-frame pipeline decisions.

Every retarget/IK/render step of a clip can be recorded to a JSONL file,
creating an audit trail for debugging bad composites after a run.
Traces carry wall-clock timestamps, so they are diagnostics only and never
part of the dataset output.
"""

import pathlib
import threading
import time
import uuid
from typing import Optional, Union

import orjson  # Fast JSON library

# Where we save all the traces (one JSON object per line); None until a run configures it
LOG: Optional[pathlib.Path] = None

_LOCK = threading.Lock()


def configure(path: Optional[Union[str, pathlib.Path]]) -> None:
    """Point traces at `path`, or switch tracing off with None."""
    global LOG
    LOG = pathlib.Path(path) if path is not None else None


def trace(name, inputs, output, meta=None, t0=None):
    """
    Log a single pipeline step to the trace file.

    Args:
        name: Which step produced the record (e.g., "ik", "frame")
        inputs: What the step consumed (clip, frame index, ...)
        output: What it produced (residuals, exclusion reason, ...)
        meta: Optional metadata dictionary for extra info
        t0: Start time (from time.perf_counter()) to calculate latency

    Notes:
        - Each trace gets a unique ID for tracking
        - Appends to the trace file (creates it if it doesn't exist)
        - Writes are serialized so parallel clips can share one file
        - numpy scalars and arrays are serialized natively by orjson
    """
    if LOG is None:
        return
    rec = {
        "id": str(uuid.uuid4()),
        "name": name,
        "ts": time.time(),
        "latency_ms": int(1000 * (time.perf_counter() - (t0 or time.perf_counter()))),
        "inputs": inputs,
        "output": output,
        "meta": meta or {},
    }
    line = orjson.dumps(rec, option=orjson.OPT_SERIALIZE_NUMPY) + b"\n"
    with _LOCK:
        LOG.parent.mkdir(parents=True, exist_ok=True)
        with LOG.open("ab") as f:
            f.write(line)
