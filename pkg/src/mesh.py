"""
Triangle meshes for robot visuals: OBJ / STL loading and URDF primitives.

Meshes are immutable. Vertex normals are always present and unit length;
when a file does not provide them they are computed per face and
area-averaged per vertex.
"""

from __future__ import annotations

import math
import pathlib
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from src.errors import CorruptFile, MeshError, NonPositiveDimension, UnsupportedFormat

DEFAULT_COLOR = (0.75, 0.75, 0.78)
DEFAULT_SEGMENTS = 32
DEDUP_DECIMALS = 9

# Binary STL facet record: normal, 3 vertices, attribute byte count
_STL_FACET = np.dtype([
    ("normal", "<f4", (3,)),
    ("vertices", "<f4", (3, 3)),
    ("attr", "<u2"),
])


@dataclass(frozen=True)
class Mesh:
    vertices: np.ndarray    # (V, 3) float64, meters, local frame
    triangles: np.ndarray   # (T, 3) int64
    normals: np.ndarray     # (V, 3) unit vectors
    color: Tuple[float, float, float] = DEFAULT_COLOR

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        t = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        n = np.array(self.normals, dtype=np.float64).reshape(-1, 3)
        if v.shape[0] == 0:
            raise MeshError("mesh has no vertices")
        if t.size and (t.min() < 0 or t.max() >= v.shape[0]):
            raise MeshError("triangle index out of range")
        if n.shape != v.shape:
            raise MeshError("one normal per vertex is required")
        if n.size and np.max(np.abs(np.linalg.norm(n, axis=1) - 1.0)) > 1e-4:
            raise MeshError("vertex normals must be unit length")
        for arr in (v, t, n):
            arr.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "color", tuple(float(c) for c in self.color))

    def scaled(self, scale: Sequence[float]) -> "Mesh":
        """Per-axis scaling; normals are re-derived so non-uniform scale stays correct."""
        s = np.asarray(scale, dtype=np.float64).reshape(3)
        if np.allclose(s, 1.0):
            return self
        v = self.vertices * s
        # normals transform with the inverse transpose
        n = self.normals / s
        n = n / np.linalg.norm(n, axis=1, keepdims=True)
        return Mesh(v, self.triangles, n, self.color)

    def with_color(self, color: Optional[Sequence[float]]) -> "Mesh":
        if color is None:
            return self
        return Mesh(self.vertices, self.triangles, self.normals, tuple(color))


def vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """
    Area-weighted vertex normals.

    The unnormalized face normal (cross product of two edges) has a length
    of twice the triangle area, so summing it per vertex weights by area.
    Vertices touched only by degenerate faces get +Z.
    """
    normals = np.zeros_like(vertices)
    if len(triangles):
        a, b, c = (vertices[triangles[:, i]] for i in range(3))
        face = np.cross(b - a, c - a)
        for i in range(3):
            np.add.at(normals, triangles[:, i], face)
    length = np.linalg.norm(normals, axis=1, keepdims=True)
    out = np.tile([0.0, 0.0, 1.0], (len(vertices), 1))
    ok = length[:, 0] > 1e-20
    out[ok] = normals[ok] / length[ok]
    return out


def _dedup(vertices: np.ndarray, triangles: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Merge vertices that agree to 1e-9 m (STL stores three copies per facet)."""
    key = np.round(vertices, DEDUP_DECIMALS)
    uniq, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    # keep first-appearance order so results do not depend on sort order of coordinates
    order = np.argsort(first)
    remap = np.empty_like(order)
    remap[order] = np.arange(len(order))
    return vertices[first[order]], remap[inverse.reshape(-1)][triangles]


# =============================================================================
# Loaders
# =============================================================================


def _parse_obj(text: str, path) -> Mesh:
    verts, norms = [], []
    faces = []  # list of [(vi, ni), ...] per polygon, 0-based, ni may be None
    for lineno, line in enumerate(text.splitlines(), 1):
        tokens = line.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        tag = tokens[0]
        try:
            if tag == "v":
                verts.append([float(x) for x in tokens[1:4]])
                if len(verts[-1]) != 3:
                    raise ValueError("vertex needs 3 coordinates")
            elif tag == "vn":
                norms.append([float(x) for x in tokens[1:4]])
                if len(norms[-1]) != 3:
                    raise ValueError("normal needs 3 components")
            elif tag == "f":
                poly = []
                for ref in tokens[1:]:
                    parts = ref.split("/")
                    vi = int(parts[0])
                    vi = vi - 1 if vi > 0 else len(verts) + vi
                    ni = None
                    if len(parts) >= 3 and parts[2]:
                        ni = int(parts[2])
                        ni = ni - 1 if ni > 0 else len(norms) + ni
                    poly.append((vi, ni))
                if len(poly) < 3:
                    raise ValueError("face needs at least 3 vertices")
                faces.append(poly)
        except ValueError as err:
            raise CorruptFile(f"{path}:{lineno}: {err}") from None

    if not verts:
        raise CorruptFile(f"{path}: OBJ has no vertices")
    for poly in faces:
        for vi, ni in poly:
            if not 0 <= vi < len(verts) or (ni is not None and not 0 <= ni < len(norms)):
                raise CorruptFile(f"{path}: face index out of range")

    # Fan triangulation of polygons
    tris = [(poly[0], poly[i], poly[i + 1]) for poly in faces for i in range(1, len(poly) - 1)]
    v = np.asarray(verts, dtype=np.float64)

    if tris and all(ni is not None for tri in tris for _, ni in tri):
        # Split vertices per unique (position, normal) pair
        pairs = {}
        out_v, out_n, out_t = [], [], []
        for tri in tris:
            idx = []
            for pair in tri:
                if pair not in pairs:
                    pairs[pair] = len(out_v)
                    out_v.append(v[pair[0]])
                    out_n.append(norms[pair[1]])
                idx.append(pairs[pair])
            out_t.append(idx)
        n = np.asarray(out_n, dtype=np.float64)
        n = n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-20)
        return Mesh(np.asarray(out_v), np.asarray(out_t), n)

    t = np.asarray([[a for a, _ in tri] for tri in tris], dtype=np.int64).reshape(-1, 3)
    return Mesh(v, t, vertex_normals(v, t))


def _parse_binary_stl(data: bytes, path) -> Mesh:
    count = int(np.frombuffer(data, dtype="<u4", count=1, offset=80)[0])
    facets = np.frombuffer(data, dtype=_STL_FACET, count=count, offset=84)
    raw = facets["vertices"].astype(np.float64).reshape(-1, 3)
    if not np.all(np.isfinite(raw)):
        raise CorruptFile(f"{path}: non-finite STL coordinates")
    tris = np.arange(len(raw), dtype=np.int64).reshape(-1, 3)
    v, t = _dedup(raw, tris)
    return Mesh(v, t, vertex_normals(v, t))


def _parse_ascii_stl(text: str, path) -> Mesh:
    raw = []
    for lineno, line in enumerate(text.splitlines(), 1):
        tokens = line.split()
        if tokens and tokens[0] == "vertex":
            try:
                raw.append([float(x) for x in tokens[1:4]])
            except ValueError:
                raise CorruptFile(f"{path}:{lineno}: non-numeric vertex") from None
    if not raw or len(raw) % 3:
        raise CorruptFile(f"{path}: ASCII STL has no complete facets")
    raw = np.asarray(raw, dtype=np.float64)
    v, t = _dedup(raw, np.arange(len(raw), dtype=np.int64).reshape(-1, 3))
    return Mesh(v, t, vertex_normals(v, t))


def load_mesh(path) -> Mesh:
    """
    Load an OBJ or STL (binary or ASCII) mesh.

    Raises:
        UnsupportedFormat for other extensions
        CorruptFile for empty, truncated or non-numeric content
    """
    path = pathlib.Path(path)
    suffix = path.suffix.lower()
    data = path.read_bytes()

    if suffix == ".obj":
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError:
            raise CorruptFile(f"{path}: OBJ is not valid UTF-8 text") from None
        return _parse_obj(text, path)

    if suffix == ".stl":
        if len(data) >= 84:
            count = int(np.frombuffer(data, dtype="<u4", count=1, offset=80)[0])
            if count > 0 and len(data) == 84 + count * _STL_FACET.itemsize:
                return _parse_binary_stl(data, path)
        if data.lstrip().startswith(b"solid"):
            return _parse_ascii_stl(data.decode("utf-8", errors="replace"), path)
        raise CorruptFile(f"{path}: truncated or malformed STL ({len(data)} bytes)")

    raise UnsupportedFormat(f"{path}: unsupported mesh format {suffix!r}")


# =============================================================================
# Primitives
# =============================================================================


def _box(size) -> Mesh:
    hx, hy, hz = (s / 2.0 for s in size)
    v = np.array([[sx * hx, sy * hy, sz * hz]
                  for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64)
    # index = 4*ix + 2*iy + iz; outward CCW faces
    t = np.array([
        [0, 1, 3], [0, 3, 2],   # -x
        [4, 6, 7], [4, 7, 5],   # +x
        [0, 4, 5], [0, 5, 1],   # -y
        [2, 3, 7], [2, 7, 6],   # +y
        [0, 2, 6], [0, 6, 4],   # -z
        [1, 5, 7], [1, 7, 3],   # +z
    ], dtype=np.int64)
    return Mesh(v, t, vertex_normals(v, t))


def _cylinder(radius: float, length: float, segments: int) -> Mesh:
    ang = 2.0 * math.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    h = length / 2.0
    bottom = np.column_stack([ring, np.full(segments, -h)])
    top = np.column_stack([ring, np.full(segments, h)])
    v = np.vstack([bottom, top, [[0.0, 0.0, -h], [0.0, 0.0, h]]])
    cb, ct = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        tris += [[i, j, segments + j], [i, segments + j, segments + i],
                 [cb, j, i], [ct, segments + i, segments + j]]
    t = np.asarray(tris, dtype=np.int64)
    return Mesh(v, t, vertex_normals(v, t))


def _sphere(radius: float, segments: int) -> Mesh:
    rings = max(segments // 2, 2)
    verts = [[0.0, 0.0, radius]]
    for r in range(1, rings):
        phi = math.pi * r / rings
        for s in range(segments):
            th = 2.0 * math.pi * s / segments
            verts.append([radius * math.sin(phi) * math.cos(th),
                          radius * math.sin(phi) * math.sin(th),
                          radius * math.cos(phi)])
    verts.append([0.0, 0.0, -radius])
    south = len(verts) - 1

    def idx(r, s):
        return 1 + (r - 1) * segments + (s % segments)

    tris = []
    for s in range(segments):
        tris.append([0, idx(1, s), idx(1, s + 1)])
        tris.append([south, idx(rings - 1, s + 1), idx(rings - 1, s)])
    for r in range(1, rings - 1):
        for s in range(segments):
            a, b = idx(r, s), idx(r, s + 1)
            c, d = idx(r + 1, s), idx(r + 1, s + 1)
            tris += [[a, c, d], [a, d, b]]
    v = np.asarray(verts, dtype=np.float64)
    # on a sphere the exact normal is the radial direction
    return Mesh(v, np.asarray(tris, dtype=np.int64), v / radius)


def make_primitive(kind: str, dims: Sequence[float], segments: int = DEFAULT_SEGMENTS) -> Mesh:
    """
    Tessellate a URDF primitive centered at its local origin.

    Args:
        kind: "box" (dims = x, y, z sizes), "cylinder" (dims = radius,
            length along z) or "sphere" (dims = radius)
        segments: angular resolution for cylinder and sphere
    """
    dims = [float(d) for d in dims]
    if not dims or any(not d > 0 for d in dims):
        raise NonPositiveDimension(f"{kind} dimensions must be positive, got {dims}")
    if kind == "box":
        if len(dims) != 3:
            raise MeshError("box needs 3 sizes")
        return _box(dims)
    if segments < 3:
        raise MeshError("need at least 3 segments")
    if kind == "cylinder":
        if len(dims) != 2:
            raise MeshError("cylinder needs radius and length")
        return _cylinder(dims[0], dims[1], segments)
    if kind == "sphere":
        if len(dims) != 1:
            raise MeshError("sphere needs a radius")
        return _sphere(dims[0], segments)
    raise MeshError(f"unknown primitive {kind!r}")
