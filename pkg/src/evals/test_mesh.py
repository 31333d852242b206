"""
Tests for mesh loading and URDF primitive tessellation.

Run with: python -m pytest src/evals/test_mesh.py -v
"""

import numpy as np
import pytest

from src.errors import CorruptFile, MeshError, NonPositiveDimension, UnsupportedFormat
from src.evals.conftest import FIXTURES
from src.mesh import Mesh, load_mesh, make_primitive, vertex_normals

TETRA = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
TETRA_FACES = [(0, 2, 1), (0, 1, 3), (0, 3, 2), (1, 2, 3)]


def _binary_stl(triangles) -> bytes:
    """Build a binary STL in memory: 80-byte header, count, 50-byte facets."""
    facets = np.zeros(len(triangles), dtype=[("normal", "<f4", (3,)), ("vertices", "<f4", (3, 3)),
                                              ("attr", "<u2")])
    facets["vertices"] = np.asarray(triangles, dtype=np.float32)
    return b"\0" * 80 + np.uint32(len(triangles)).tobytes() + facets.tobytes()


def _ascii_stl(triangles) -> str:
    lines = ["solid tetra"]
    for tri in triangles:
        lines += ["  facet normal 0 0 0", "    outer loop"]
        lines += [f"      vertex {x} {y} {z}" for x, y, z in tri]
        lines += ["    endloop", "  endfacet"]
    lines.append("endsolid tetra")
    return "\n".join(lines)


def _tetra_triangles():
    return [TETRA[list(f)] for f in TETRA_FACES]


def test_obj_quads_are_triangulated():
    """OBJ quads fan into triangles with unit normals."""
    mesh = load_mesh(FIXTURES / "meshes" / "link.obj")
    assert mesh.vertices.shape == (8, 3)
    assert mesh.triangles.shape == (12, 3), "six quads fan into twelve triangles"
    assert np.allclose(np.linalg.norm(mesh.normals, axis=1), 1.0)


def test_obj_with_normals_and_negative_indices():
    """Relative indices resolve and vertices split per position/normal pair."""
    mesh = load_mesh(FIXTURES / "meshes" / "wrist.obj")
    # 2 triangles for the base quad + 4 sides; vertices split per (position, normal)
    assert mesh.triangles.shape == (6, 3)
    assert mesh.vertices.shape[0] == 4 + 3 * 4
    base = mesh.normals[mesh.triangles[0]]
    assert np.allclose(base, [0.0, 0.0, -1.0])


def test_binary_stl_deduplicates_vertices(tmp_path):
    """Binary STL facets share their corner vertices after loading."""
    path = tmp_path / "tetra.stl"
    path.write_bytes(_binary_stl(_tetra_triangles()))
    mesh = load_mesh(path)
    assert mesh.vertices.shape == (4, 3), "shared corners collapse to four vertices"
    assert mesh.triangles.shape == (4, 3)
    for face, tri in zip(TETRA_FACES, mesh.triangles):
        assert np.allclose(mesh.vertices[tri], TETRA[list(face)])


def test_ascii_stl(tmp_path):
    """ASCII STL with an upper-case extension."""
    path = tmp_path / "tetra.STL"
    path.write_text(_ascii_stl(_tetra_triangles()))
    mesh = load_mesh(path)
    assert mesh.vertices.shape == (4, 3) and mesh.triangles.shape == (4, 3)


def test_truncated_stl(tmp_path):
    """A binary STL cut short is corrupt."""
    path = tmp_path / "bad.stl"
    path.write_bytes(_binary_stl(_tetra_triangles())[:-10])
    with pytest.raises(CorruptFile):
        load_mesh(path)


def test_bad_files(tmp_path):
    """Unknown formats and meshes without faces are refused."""
    (tmp_path / "a.dae").write_text("<COLLADA/>")
    with pytest.raises(UnsupportedFormat):
        load_mesh(tmp_path / "a.dae")
    (tmp_path / "empty.obj").write_text("# nothing here\n")
    with pytest.raises(CorruptFile):
        load_mesh(tmp_path / "empty.obj")
    (tmp_path / "nan.obj").write_text("v 0 0 zero\n")
    with pytest.raises(CorruptFile):
        load_mesh(tmp_path / "nan.obj")
    (tmp_path / "range.obj").write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(CorruptFile):
        load_mesh(tmp_path / "range.obj")


def test_vertex_normals_point_outward():
    """Area-weighted normals of a tetrahedron point away from its centroid."""
    tris = np.array(TETRA_FACES)
    normals = vertex_normals(TETRA, tris)
    centroid = TETRA.mean(axis=0)
    for v, n in zip(TETRA, normals):
        assert np.dot(n, v - centroid) > 0


def test_box_primitive():
    """Box primitives are centered with the given extents."""
    mesh = make_primitive("box", (0.2, 0.4, 0.6))
    assert mesh.triangles.shape == (12, 3)
    assert np.allclose(mesh.vertices.min(axis=0), [-0.1, -0.2, -0.3])
    assert np.allclose(mesh.vertices.max(axis=0), [0.1, 0.2, 0.3])


def test_cylinder_and_sphere_primitives():
    """Cylinder and sphere primitives respect radius and length."""
    cyl = make_primitive("cylinder", (0.05, 0.2), segments=16)
    assert np.allclose(np.abs(cyl.vertices[:, 2]).max(), 0.1)
    assert np.linalg.norm(cyl.vertices[:, :2], axis=1).max() == pytest.approx(0.05)
    sphere = make_primitive("sphere", (0.03,), segments=12)
    assert np.allclose(np.linalg.norm(sphere.vertices, axis=1), 0.03)
    assert np.allclose(sphere.normals, sphere.vertices / 0.03)


def test_primitive_validation():
    """Zero or negative primitive dimensions are refused."""
    with pytest.raises(NonPositiveDimension):
        make_primitive("box", (0.1, 0.0, 0.1))
    with pytest.raises(NonPositiveDimension):
        make_primitive("sphere", (-1.0,))
    with pytest.raises(MeshError):
        make_primitive("cone", (0.1, 0.2))


def test_scaled_mesh_keeps_unit_normals():
    """Non-uniform scaling renormalizes the normals."""
    cube = load_mesh(FIXTURES / "meshes" / "link.obj")
    stretched = cube.scaled((0.04, 0.04, 0.4))
    assert np.allclose(stretched.vertices.max(axis=0), [0.02, 0.02, 0.2])
    assert np.allclose(np.linalg.norm(stretched.normals, axis=1), 1.0)
    assert cube.scaled((1, 1, 1)) is cube


def test_mesh_invariants():
    """Out-of-range indices and non-unit normals are refused."""
    with pytest.raises(MeshError):
        Mesh(TETRA, [[0, 1, 7]], np.tile([0.0, 0.0, 1.0], (4, 1)))
    with pytest.raises(MeshError):
        Mesh(TETRA, [[0, 1, 2]], np.ones((4, 3)))
    mesh = Mesh(TETRA, [[0, 1, 2]], np.tile([0.0, 0.0, 1.0], (4, 1))).with_color((1, 0, 0))
    assert mesh.color == (1.0, 0.0, 0.0)
