"""
File formats for clip bundles and dataset outputs.

- PFM (portable float map): scene depth in meters, grayscale, written
  little-endian; rows are stored bottom-to-top as the format requires.
- PNG: 8-bit RGB frames and 8-bit masks via Pillow.
- JSON Lines: one orjson record per line (hands, camera, labels).

Every writer goes through atomic_write: bytes land in a temporary file in
the destination directory and are renamed into place, so an interrupted
run never leaves a half-written file behind.
"""

from __future__ import annotations

import io
import os
import pathlib
import tempfile
from typing import Iterable, Iterator, List, Tuple

import numpy as np
import orjson
from PIL import Image

from src.errors import CorruptFile

FRAME_DIGITS = 6


def frame_name(index: int, suffix: str) -> str:
    return f"{index:0{FRAME_DIGITS}d}{suffix}"


def atomic_write(path, data: bytes) -> None:
    path = pathlib.Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# =============================================================================
# PFM
# =============================================================================


def decode_pfm(data: bytes, name: str = "<pfm>") -> np.ndarray:
    """
    Decode a grayscale PFM into an (H, W) float32 array, top row first.

    Raises:
        CorruptFile on a bad header, color PFMs or truncated pixel data
    """
    # Header: three whitespace-terminated tokens, then one whitespace byte
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(data):
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if len(tokens) < 4 or pos >= len(data):
        raise CorruptFile(f"{name}: truncated PFM header")
    pos += 1  # single whitespace byte before the raster

    magic, w_raw, h_raw, scale_raw = tokens
    if magic == b"PF":
        raise CorruptFile(f"{name}: color PFM found, depth must be grayscale (Pf)")
    if magic != b"Pf":
        raise CorruptFile(f"{name}: not a PFM file")
    try:
        width, height, scale = int(w_raw), int(h_raw), float(scale_raw)
    except ValueError:
        raise CorruptFile(f"{name}: non-numeric PFM header") from None
    if width <= 0 or height <= 0 or scale == 0.0:
        raise CorruptFile(f"{name}: invalid PFM dimensions or scale")

    dtype = "<f4" if scale < 0 else ">f4"
    needed = width * height * 4
    if len(data) - pos < needed:
        raise CorruptFile(f"{name}: PFM raster truncated ({len(data) - pos} of {needed} bytes)")
    raster = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return np.flipud(raster.reshape(height, width)).astype(np.float32)


def encode_pfm(depth: np.ndarray) -> bytes:
    """Little-endian grayscale PFM bytes for an (H, W) array."""
    d = np.asarray(depth, dtype="<f4")
    if d.ndim != 2:
        raise ValueError(f"depth must be 2-D, got shape {d.shape}")
    h, w = d.shape
    header = f"Pf\n{w} {h}\n-1.0\n".encode("ascii")
    return header + np.flipud(d).tobytes()


def read_pfm(path) -> np.ndarray:
    path = pathlib.Path(path)
    return decode_pfm(path.read_bytes(), str(path))


def write_pfm(path, depth: np.ndarray) -> None:
    atomic_write(path, encode_pfm(depth))


# =============================================================================
# PNG
# =============================================================================


def read_png_rgb(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except (OSError, SyntaxError) as err:
        raise CorruptFile(f"{path}: unreadable image ({err})") from None


def read_png_mask(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L"), dtype=np.uint8) > 127
    except (OSError, SyntaxError) as err:
        raise CorruptFile(f"{path}: unreadable mask ({err})") from None


def png_size(path) -> Tuple[int, int]:
    """(height, width) of an image, verifying the file is decodable."""
    try:
        with Image.open(path) as img:
            img.verify()
        with Image.open(path) as img:
            img.load()
            return img.height, img.width
    except (OSError, SyntaxError) as err:
        raise CorruptFile(f"{path}: unreadable image ({err})") from None


def encode_png(array: np.ndarray) -> bytes:
    """
    PNG bytes for an (H, W, 3) uint8 image or an (H, W) bool/uint8 mask.

    Compression settings are fixed so identical pixels give identical bytes.
    """
    arr = np.asarray(array)
    if arr.dtype == bool:
        arr = arr.astype(np.uint8) * 255
    img = Image.fromarray(np.ascontiguousarray(arr, dtype=np.uint8))
    buf = io.BytesIO()
    img.save(buf, format="PNG", optimize=False, compress_level=6)
    return buf.getvalue()


def write_png(path, array: np.ndarray) -> None:
    atomic_write(path, encode_png(array))


# =============================================================================
# JSON Lines
# =============================================================================


def iter_jsonl(path) -> Iterator[Tuple[int, dict]]:
    """Yield (line number, record) for each non-blank line; CorruptFile on bad JSON."""
    path = pathlib.Path(path)
    for lineno, line in enumerate(path.read_bytes().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = orjson.loads(line)
        except orjson.JSONDecodeError as err:
            raise CorruptFile(f"{path}:{lineno}: invalid JSON ({err})") from None
        if not isinstance(rec, dict):
            raise CorruptFile(f"{path}:{lineno}: expected a JSON object")
        yield lineno, rec


def encode_jsonl(records: Iterable[dict]) -> bytes:
    return b"".join(orjson.dumps(r) + b"\n" for r in records)


def write_jsonl(path, records: Iterable[dict]) -> None:
    atomic_write(path, encode_jsonl(records))


def write_json(path, obj) -> None:
    atomic_write(path, orjson.dumps(obj, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS) + b"\n")
