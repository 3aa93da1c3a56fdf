import warnings

import numpy as np
import pytest

from stagns.mesh import (
    BUILTIN_MESHES,
    MeshError,
    StaggeredMesh,
    load_mesh,
    refine_uniform,
    regularity,
    write_smesh,
)
from conftest import refined

ALL_MESHES = ["unit_triangle", "equilateral_triangle", "two_triangle_square", "criss_cross_square",
              "unit_tetrahedron", "two_tetrahedra", "kuhn_cube"]


def test_unit_triangle_geometry():
    m = BUILTIN_MESHES["unit_triangle"]()
    assert m.cell_measure[0] == pytest.approx(0.5)
    assert sorted(m.face_measure) == pytest.approx([1.0, 1.0, np.sqrt(2.0)])
    assert np.allclose(m.half_diamond_measure, 1.0 / 6.0)
    assert m.n_interior == 0


def test_two_triangle_square_diagonal():
    m = BUILTIN_MESHES["two_triangle_square"]()
    assert m.n_interior == 1
    f = m.interior_faces[0]
    assert m.face_measure[f] == pytest.approx(np.sqrt(2.0))
    assert m.diamond_measure[f] == pytest.approx(1.0 / 3.0)
    lower = 0
    assert m.face_cells[f, 0] == lower
    assert np.allclose(m.face_normal[f], np.array([-1.0, 1.0]) / np.sqrt(2.0))


@pytest.mark.parametrize("name", ALL_MESHES)
def test_structural_invariants(name):
    m = refined(name, 1)
    d = m.dim
    assert np.allclose(m.half_diamond_measure, m.cell_measure[:, None] / (d + 1), rtol=0, atol=1e-15)
    inner, outer = m.interior_faces, m.boundary_faces
    K, L = m.face_cells[inner, 0], m.face_cells[inner, 1]
    lk, ll = m.face_local[inner, 0], m.face_local[inner, 1]
    total = m.half_diamond_measure[K, lk] + m.half_diamond_measure[L, ll]
    assert np.allclose(m.diamond_measure[inner], total, rtol=1e-14)
    assert np.allclose(m.diamond_measure[outer],
                       m.half_diamond_measure[m.face_cells[outer, 0], m.face_local[outer, 0]])
    closed = np.einsum("cf,cfk->ck", m.face_measure[m.cell_faces], m.cell_normals)
    assert np.abs(closed).max() < 1e-14
    assert np.allclose(np.linalg.norm(m.face_normal, axis=1), 1.0, atol=1e-15)
    assert np.allclose(m.cell_normals[K, lk], -m.cell_normals[L, ll], atol=0)
    hull = [abs(np.linalg.det(m.points[c[1:]] - m.points[c[0]])) for c in m.cells]
    import math
    assert sum(hull) / math.factorial(d) == pytest.approx(m.volume, rel=1e-14)


def test_regularity_values():
    theta_right = np.sqrt(2.0) / ((2.0 - np.sqrt(2.0)) / 2.0)
    assert regularity(BUILTIN_MESHES["unit_triangle"]()) == pytest.approx(theta_right)
    assert regularity(BUILTIN_MESHES["two_triangle_square"]()) == pytest.approx(theta_right)
    assert regularity(BUILTIN_MESHES["equilateral_triangle"]()) == pytest.approx(2 * np.sqrt(3.0))


@pytest.mark.parametrize("name", ["two_triangle_square", "criss_cross_square", "kuhn_cube"])
def test_regularity_bounded_under_refinement(name):
    thetas = [regularity(refined(name, k)) for k in range(3)]
    assert max(thetas) <= thetas[0] * (1 + 1e-12)


def test_refine_counts_and_measures():
    m = refine_uniform(BUILTIN_MESHES["unit_triangle"]())
    assert m.n_cells == 4 and np.allclose(m.cell_measure, 0.125)
    m = refined("two_triangle_square", 2)
    assert m.n_cells == 32 and abs(m.cell_measure.sum() - 1.0) < 1e-14
    t = refine_uniform(BUILTIN_MESHES["unit_tetrahedron"]())
    assert t.n_cells == 8
    assert t.cell_measure.sum() == pytest.approx(1.0 / 6.0, rel=1e-14)
    assert np.all(t.parent_cell == 0)


def test_degenerate_and_duplicate_errors():
    with pytest.raises(MeshError, match="degenerate cell"):
        StaggeredMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 1]])
    with pytest.raises(MeshError, match="degenerate cell"):
        StaggeredMesh([[0, 0], [1, 0], [2, 0]], [[0, 1, 2]])
    with pytest.raises(MeshError, match="duplicate"):
        StaggeredMesh([[0, 0], [1, 0], [0, 1], [0, 0]], [[0, 1, 2], [3, 1, 2]])
    with pytest.raises(MeshError, match="non-manifold"):
        StaggeredMesh([[0, 0], [1, 0], [0, 1], [1, 1], [-1, -1]], [[0, 1, 2], [1, 2, 3], [1, 2, 4]])


def test_disconnected_mesh_warns():
    pts = [[0, 0], [1, 0], [0, 1], [5, 5], [6, 5], [5, 6]]
    with pytest.warns(UserWarning):
        StaggeredMesh(pts, [[0, 1, 2], [3, 4, 5]])


def test_arrays_are_read_only():
    m = BUILTIN_MESHES["two_triangle_square"]()
    with pytest.raises(ValueError):
        m.face_normal[0, 0] = 1.0


def test_smesh_round_trip(tmp_path):
    m = refined("kuhn_cube", 1)
    path = tmp_path / "cube.smesh"
    write_smesh(m, path)
    back = load_mesh(path)
    assert np.array_equal(back.cells, m.cells)
    assert np.array_equal(back.points, m.points)


def test_smesh_errors(tmp_path):
    path = tmp_path / "bad.smesh"
    path.write_text("2 3 1\n0 0\n1 0\n")
    with pytest.raises(MeshError, match="expected"):
        load_mesh(path)
    path.write_text("4 3 1\n")
    with pytest.raises(MeshError, match="dimension"):
        load_mesh(path)
    with pytest.raises(MeshError):
        load_mesh(tmp_path / "missing.smesh")


GMSH_SQUARE = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
5
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
9 7 7 0
$EndNodes
$Elements
4
1 1 2 0 1 1 2
2 15 2 0 1 1
3 2 2 0 1 1 2 3
4 2 2 0 1 1 3 4
$EndElements
"""


def test_gmsh_reader(tmp_path):
    path = tmp_path / "square.msh"
    path.write_text(GMSH_SQUARE)
    m = load_mesh(path)
    assert m.dim == 2 and m.n_cells == 2 and len(m.points) == 4
    assert m.volume == pytest.approx(1.0)
    path.write_text(GMSH_SQUARE.replace("2.2 0 8", "2.2 1 8"))
    with pytest.raises(MeshError, match="ASCII"):
        load_mesh(path)
