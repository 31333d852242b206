"""
Software rasterizer producing an RGB-D image of posed meshes.

Perspective-correct, z-buffered triangle rasterization under the pinhole
model of src.geometry. Each pixel is sampled once at its integer center;
pixels lying exactly on a shared edge belong to the triangle for which
that edge is a top or left edge. Depth is the camera-space z of the
nearest surface, +inf where nothing was drawn.

Shading is a single directional light with ambient + diffuse terms over
interpolated vertex normals. Lighting is two-sided: normals facing away
from the camera are flipped, so inconsistent mesh winding still shades.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.geometry import SE3, CameraIntrinsics
from src.mesh import Mesh

NEAR_PLANE = 0.01  # meters


class Light(BaseModel):
    """Directional light in the camera frame; `direction` is where the light travels."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    direction: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    ambient: float = Field(0.35, ge=0.0, le=1.0)
    diffuse: float = Field(0.65, ge=0.0, le=1.0)

    @field_validator("direction")
    @classmethod
    def _unit(cls, v):
        n = math.sqrt(sum(c * c for c in v))
        if n < 1e-12:
            raise ValueError("light direction must be non-zero")
        return tuple(c / n for c in v)

    @model_validator(mode="after")
    def _budget(self):
        if self.ambient + self.diffuse > 1.2:
            raise ValueError("ambient + diffuse must not exceed 1.2")
        return self


@dataclass(frozen=True)
class RenderInstance:
    mesh: Mesh
    pose: SE3  # mesh frame -> camera frame


@dataclass(frozen=True)
class RenderScene:
    instances: Sequence[RenderInstance]
    intrinsics: CameraIntrinsics
    light: Light = field(default_factory=Light)
    near: float = NEAR_PLANE


@dataclass(frozen=True)
class RgbdRender:
    rgb: np.ndarray       # (H, W, 3) uint8
    depth: np.ndarray     # (H, W) float32, +inf where empty
    coverage: np.ndarray  # (H, W) bool

    @property
    def shape(self) -> Tuple[int, int]:
        return self.depth.shape


def empty_render(height: int, width: int) -> RgbdRender:
    return RgbdRender(np.zeros((height, width, 3), np.uint8),
                      np.full((height, width), np.inf, np.float32),
                      np.zeros((height, width), bool))


# =============================================================================
# Triangle setup
# =============================================================================


@dataclass
class _Tri:
    """Screen-space triangle ready for scan conversion."""

    uv: np.ndarray       # (3, 2) pixel coords
    inv_z: np.ndarray    # (3,)
    n_over_z: np.ndarray  # (3, 3) normals divided by z
    color: np.ndarray    # (3,)
    area: float
    bbox: Tuple[int, int, int, int]  # x0, x1, y0, y1 inclusive


def _clip_near(p: np.ndarray, n: np.ndarray, near: float) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Sutherland-Hodgman clip of one triangle against z >= near; returns a fan polygon."""
    out = []
    for i in range(3):
        a_p, a_n = p[i], n[i]
        b_p, b_n = p[(i + 1) % 3], n[(i + 1) % 3]
        a_in, b_in = a_p[2] >= near, b_p[2] >= near
        if a_in:
            out.append((a_p, a_n))
        if a_in != b_in:
            t = (near - a_p[2]) / (b_p[2] - a_p[2])
            out.append((a_p + t * (b_p - a_p), a_n + t * (b_n - a_n)))
    return out


def _setup(scene: RenderScene) -> List[_Tri]:
    k = scene.intrinsics
    h, w = k.height, k.width
    tris: List[_Tri] = []
    for inst in scene.instances:
        mesh = inst.mesh
        if not len(mesh.triangles):
            continue
        verts = mesh.vertices @ inst.pose.rotation.T + inst.pose.translation
        norms = mesh.normals @ inst.pose.rotation.T
        color = np.asarray(mesh.color, dtype=np.float64)
        for tri in mesh.triangles:
            p, n = verts[tri], norms[tri]
            if np.all(p[:, 2] >= scene.near):
                polys = [(p, n)]
            else:
                poly = _clip_near(p, n, scene.near)
                if len(poly) < 3:
                    continue
                polys = [(np.array([poly[0][0], poly[i][0], poly[i + 1][0]]),
                          np.array([poly[0][1], poly[i][1], poly[i + 1][1]]))
                         for i in range(1, len(poly) - 1)]
            for pp, nn in polys:
                z = pp[:, 2]
                uv = np.stack([k.fx * pp[:, 0] / z + k.cx, k.fy * pp[:, 1] / z + k.cy], axis=1)
                area = ((uv[1, 0] - uv[0, 0]) * (uv[2, 1] - uv[0, 1])
                        - (uv[1, 1] - uv[0, 1]) * (uv[2, 0] - uv[0, 0]))
                if abs(area) < 1e-12:
                    continue
                order = [0, 1, 2] if area > 0 else [0, 2, 1]
                uv, zz, nn = uv[order], z[order], nn[order]
                x0 = max(int(math.ceil(uv[:, 0].min())), 0)
                x1 = min(int(math.floor(uv[:, 0].max())), w - 1)
                y0 = max(int(math.ceil(uv[:, 1].min())), 0)
                y1 = min(int(math.floor(uv[:, 1].max())), h - 1)
                if x0 > x1 or y0 > y1:
                    continue
                tris.append(_Tri(uv, 1.0 / zz, nn / zz[:, None], color, abs(area), (x0, x1, y0, y1)))
    return tris


# =============================================================================
# Scan conversion
# =============================================================================


def _edge(a: np.ndarray, b: np.ndarray, px: np.ndarray, py: np.ndarray):
    """Edge function of a->b at pixel centers, and whether the edge owns ties (top-left rule)."""
    du, dv = b[0] - a[0], b[1] - a[1]
    e = du * (py - a[1]) - dv * (px - a[0])
    owned = dv < 0 or (dv == 0 and du > 0)
    return e, owned


def _raster_band(tris: List[_Tri], scene: RenderScene, row0: int, row1: int):
    """Rasterize rows [row0, row1) into a private z-buffer slice."""
    k = scene.intrinsics
    w = k.width
    rows = row1 - row0
    zbuf = np.full((rows, w), np.inf)
    nbuf = np.zeros((rows, w, 3))
    cbuf = np.zeros((rows, w, 3))

    for t in tris:
        x0, x1, y0, y1 = t.bbox
        y0, y1 = max(y0, row0), min(y1, row1 - 1)
        if y0 > y1:
            continue
        px, py = np.meshgrid(np.arange(x0, x1 + 1, dtype=np.float64),
                             np.arange(y0, y1 + 1, dtype=np.float64))
        a, b, c = t.uv
        e0, o0 = _edge(b, c, px, py)  # opposite vertex 0
        e1, o1 = _edge(c, a, px, py)  # opposite vertex 1
        e2, o2 = _edge(a, b, px, py)  # opposite vertex 2
        inside = np.ones(px.shape, dtype=bool)
        for e, owned in ((e0, o0), (e1, o1), (e2, o2)):
            inside &= (e >= 0) if owned else (e > 0)
        if not inside.any():
            continue

        w0, w1, w2 = e0[inside] / t.area, e1[inside] / t.area, e2[inside] / t.area
        inv_z = w0 * t.inv_z[0] + w1 * t.inv_z[1] + w2 * t.inv_z[2]
        depth = 1.0 / inv_z

        yy = py[inside].astype(np.int64) - row0
        xx = px[inside].astype(np.int64)
        nearer = depth < zbuf[yy, xx]
        if not nearer.any():
            continue
        yy, xx, depth = yy[nearer], xx[nearer], depth[nearer]
        normal = (w0[nearer, None] * t.n_over_z[0] + w1[nearer, None] * t.n_over_z[1]
                  + w2[nearer, None] * t.n_over_z[2]) / inv_z[nearer, None]
        zbuf[yy, xx] = depth
        nbuf[yy, xx] = normal
        cbuf[yy, xx] = t.color

    covered = np.isfinite(zbuf)
    rgb = np.zeros((rows, w, 3), np.uint8)
    if covered.any():
        ys, xs = np.nonzero(covered)
        n = nbuf[ys, xs]
        n = n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-20)
        view = np.stack([(xs - k.cx) / k.fx, (ys + row0 - k.cy) / k.fy, np.ones(len(xs))], axis=1)
        # two-sided lighting: face every normal towards the camera
        n = np.where((np.sum(n * view, axis=1) > 0)[:, None], -n, n)
        light = scene.light
        lambert = np.maximum(0.0, -(n @ np.asarray(light.direction)))
        intensity = np.clip(light.ambient + light.diffuse * lambert, 0.0, 1.0)
        shaded = np.clip(intensity[:, None] * cbuf[ys, xs], 0.0, 1.0)
        rgb[ys, xs] = np.round(shaded * 255.0).astype(np.uint8)
    return zbuf.astype(np.float32), rgb, covered


def rasterize(scene: RenderScene, bands: int = 1) -> RgbdRender:
    """
    Render the scene into an RgbdRender.

    Args:
        scene: meshes posed in the camera frame, intrinsics and light
        bands: number of horizontal row bands rendered concurrently; the
            output is identical for every value

    Notes:
        - Triangles crossing the near plane are clipped against it
        - When two triangles hit a pixel at exactly the same depth, the one
          submitted first keeps it
    """
    k = scene.intrinsics
    h, w = k.height, k.width
    tris = _setup(scene)
    if not tris:
        return empty_render(h, w)

    bands = max(1, min(int(bands), h))
    edges = np.linspace(0, h, bands + 1).astype(int)
    spans = [(int(edges[i]), int(edges[i + 1])) for i in range(bands) if edges[i + 1] > edges[i]]
    if len(spans) == 1:
        parts = [_raster_band(tris, scene, 0, h)]
    else:
        with ThreadPoolExecutor(max_workers=len(spans)) as pool:
            parts = list(pool.map(lambda s: _raster_band(tris, scene, s[0], s[1]), spans))

    depth = np.concatenate([p[0] for p in parts], axis=0)
    rgb = np.concatenate([p[1] for p in parts], axis=0)
    coverage = np.concatenate([p[2] for p in parts], axis=0)
    return RgbdRender(rgb, depth, coverage)
