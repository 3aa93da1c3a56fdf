"""Simplicial meshes with face topology and half-diamond dual cells.

A :class:`StaggeredMesh` is built once from points and cells and is
read-only afterwards.  Densities live on cells, velocities on faces, and
the dual (diamond) cell of a face is the union of the cones joining the
face to the centroids of its one or two neighbouring cells.

Conventions used throughout the package:

* local face ``i`` of a cell is the face opposite its local vertex ``i``;
* ``face_cells[f] = (K, L)`` with ``L = -1`` on the boundary; ``K`` is the
  first cell (in file order) containing the face and is called the owner;
* ``face_normal[f]`` is the unit normal pointing out of the owner;
* ``cell_normals[K, i]`` is the outward unit normal of local face ``i``
  and is the exact negation of the owner normal when ``K`` is the neighbour.
"""
from __future__ import annotations

import math
import warnings
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree


class MeshError(ValueError):
    """Raised for unreadable or geometrically invalid meshes."""


def _readonly(*arrays):
    for a in arrays:
        a.setflags(write=False)


class StaggeredMesh:
    """Primal simplices plus faces, normals, measures and diamond cells."""

    def __init__(self, points, cells, parent_cell=None, check_duplicates=True):
        points = np.array(points, dtype=float)
        cells = np.array(cells, dtype=np.int64)
        if points.ndim != 2 or points.shape[1] not in (2, 3):
            raise MeshError("points must be an (n, 2) or (n, 3) array")
        d = points.shape[1]
        if cells.ndim != 2 or cells.shape[1] != d + 1 or len(cells) == 0:
            raise MeshError(f"cells must be a non-empty (n, {d + 1}) array")
        if cells.min() < 0 or cells.max() >= len(points):
            raise MeshError("cell references a point index out of range")
        if not np.all(np.isfinite(points)):
            raise MeshError("non-finite point coordinates")
        if check_duplicates and len(points) > 1:
            pairs = cKDTree(points).query_pairs(1e-12)
            if pairs:
                i, j = min(pairs)
                raise MeshError(f"duplicate points {i} and {j} within 1e-12")

        self.dim = d
        self.points = points
        self.cells = cells
        self.parent_cell = None if parent_cell is None else np.asarray(parent_cell, dtype=np.int64)

        self._build_cell_geometry()
        self._build_faces()
        self._build_face_geometry()
        self._check_connected()

        _readonly(self.points, self.cells)
        if self.parent_cell is not None:
            _readonly(self.parent_cell)

    # -- construction ----------------------------------------------------

    def _build_cell_geometry(self):
        d = self.dim
        nc = len(self.cells)
        sorted_cells = np.sort(self.cells, axis=1)
        if np.any(sorted_cells[:, 1:] == sorted_cells[:, :-1]):
            bad = int(np.nonzero(np.any(sorted_cells[:, 1:] == sorted_cells[:, :-1], axis=1))[0][0])
            raise MeshError(f"degenerate cell {bad}: repeated vertex")

        X = self.points[self.cells]                      # (nc, d+1, d)
        E = X[:, 1:, :] - X[:, :1, :]                    # rows are edge vectors
        det = np.linalg.det(E)
        vol = np.abs(det) / math.factorial(d)
        diffs = X[:, :, None, :] - X[:, None, :, :]
        diam = np.sqrt((diffs ** 2).sum(axis=-1)).max(axis=(1, 2))
        bad = vol <= 1e-12 * diam ** d
        if np.any(bad):
            raise MeshError(f"degenerate cell {int(np.nonzero(bad)[0][0])}: zero volume")

        glam = np.empty((nc, d + 1, d))
        glam[:, 1:, :] = np.linalg.inv(E).transpose(0, 2, 1)
        glam[:, 0, :] = -glam[:, 1:, :].sum(axis=1)

        self.signed_volume = det / math.factorial(d)
        self.cell_measure = vol
        self.cell_diameter = diam
        self.cell_centroid = X.mean(axis=1)
        self.barycentric_gradients = glam
        _readonly(self.signed_volume, self.cell_measure, self.cell_diameter,
                  self.cell_centroid, self.barycentric_gradients)

    def _build_faces(self):
        d = self.dim
        nc = len(self.cells)
        local = np.array([[j for j in range(d + 1) if j != i] for i in range(d + 1)])
        all_faces = self.cells[:, local]                 # (nc, d+1, d)
        keys = np.sort(all_faces.reshape(-1, d), axis=1)
        uniq, first, inverse, counts = np.unique(
            keys, axis=0, return_index=True, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        if np.any(counts > 2):
            bad = uniq[np.argmax(counts)]
            raise MeshError(f"non-manifold face {tuple(int(v) for v in bad)} shared by more than two cells")
        # renumber faces by first occurrence so that entity order follows file order
        order = np.argsort(first, kind="stable")
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        face_id = rank[inverse]
        nf = len(uniq)

        cell_faces = face_id.reshape(nc, d + 1)
        face_cells = -np.ones((nf, 2), dtype=np.int64)
        face_local = -np.ones((nf, 2), dtype=np.int64)
        flat_cell = np.repeat(np.arange(nc), d + 1)
        flat_local = np.tile(np.arange(d + 1), nc)
        # occurrences are visited in file order; the first is the owner
        slot = np.zeros(nf, dtype=np.int64)
        for occ in range(len(face_id)):
            f = face_id[occ]
            s = slot[f]
            face_cells[f, s] = flat_cell[occ]
            face_local[f, s] = flat_local[occ]
            slot[f] = s + 1

        owner_occ = face_cells[:, 0] * (d + 1) + face_local[:, 0]
        self.faces = all_faces.reshape(-1, d)[owner_occ]
        self.cell_faces = cell_faces
        self.face_cells = face_cells
        self.face_local = face_local
        self.is_boundary_face = face_cells[:, 1] < 0
        self.interior_faces = np.nonzero(~self.is_boundary_face)[0]
        self.boundary_faces = np.nonzero(self.is_boundary_face)[0]
        dof = -np.ones(nf, dtype=np.int64)
        dof[self.interior_faces] = np.arange(len(self.interior_faces))
        self.face_dof = dof
        # +1 where the cell owns the face, -1 where it is the neighbour
        sign = np.where(face_cells[cell_faces, 0] == np.arange(nc)[:, None], 1.0, -1.0)
        self.cell_face_sign = sign
        _readonly(self.faces, self.cell_faces, self.face_cells, self.face_local,
                  self.is_boundary_face, self.interior_faces, self.boundary_faces,
                  self.face_dof, self.cell_face_sign)

    def _build_face_geometry(self):
        d = self.dim
        F = self.points[self.faces]                      # (nf, d, d)
        if d == 2:
            fmeas = np.linalg.norm(F[:, 1] - F[:, 0], axis=1)
        else:
            fmeas = 0.5 * np.linalg.norm(np.cross(F[:, 1] - F[:, 0], F[:, 2] - F[:, 0]), axis=1)
        owner = self.face_cells[:, 0]
        g = self.barycentric_gradients[owner, self.face_local[:, 0]]
        normal = -g / np.linalg.norm(g, axis=1)[:, None]

        self.face_measure = fmeas
        self.face_normal = normal
        self.face_barycenter = F.mean(axis=1)
        self.cell_normals = normal[self.cell_faces] * self.cell_face_sign[:, :, None]
        self.half_diamond_measure = np.repeat(self.cell_measure[:, None] / (d + 1), d + 1, axis=1)
        dm = self.cell_measure[owner] / (d + 1)
        inner = ~self.is_boundary_face
        dm[inner] += self.cell_measure[self.face_cells[inner, 1]] / (d + 1)
        self.diamond_measure = dm
        self.cell_perimeter = fmeas[self.cell_faces].sum(axis=1)
        self.inradius = d * self.cell_measure / self.cell_perimeter
        self.mesh_size = float(self.cell_diameter.max())
        _readonly(self.face_measure, self.face_normal, self.face_barycenter, self.cell_normals,
                  self.half_diamond_measure, self.diamond_measure, self.cell_perimeter,
                  self.inradius)

    def _check_connected(self):
        inner = self.interior_faces
        if len(self.cells) < 2:
            return
        K, L = self.face_cells[inner, 0], self.face_cells[inner, 1]
        n = len(self.cells)
        graph = coo_matrix((np.ones(len(K)), (K, L)), shape=(n, n))
        ncomp, _ = connected_components(graph, directed=False)
        if ncomp > 1:
            warnings.warn(f"mesh is disconnected ({ncomp} components)", stacklevel=3)

    # -- convenience -----------------------------------------------------

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_interior(self) -> int:
        return len(self.interior_faces)

    @property
    def volume(self) -> float:
        return float(self.cell_measure.sum())

    def __repr__(self):
        return (f"StaggeredMesh(dim={self.dim}, points={len(self.points)}, cells={self.n_cells}, "
                f"faces={self.n_faces}, interior={self.n_interior}, h={self.mesh_size:.4g})")


def regularity(mesh: StaggeredMesh) -> float:
    """Return theta: max of h_K / inradius_K and neighbour diameter ratios."""
    theta = float((mesh.cell_diameter / mesh.inradius).max())
    inner = mesh.interior_faces
    if len(inner):
        hK = mesh.cell_diameter[mesh.face_cells[inner, 0]]
        hL = mesh.cell_diameter[mesh.face_cells[inner, 1]]
        theta = max(theta, float(np.maximum(hK / hL, hL / hK).max()))
    return theta


def _edge_midpoints(mesh):
    """Number the edges of the mesh by first occurrence and return midpoints."""
    d = mesh.dim
    pairs = [(i, j) for i in range(d + 1) for j in range(i + 1, d + 1)]
    e = mesh.cells[:, [p[0] for p in pairs]], mesh.cells[:, [p[1] for p in pairs]]
    keys = np.stack([np.minimum(*e), np.maximum(*e)], axis=-1).reshape(-1, 2)
    uniq, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    edge_id = rank[inverse.ravel()].reshape(len(mesh.cells), len(pairs))
    uniq = uniq[order]
    mids = 0.5 * (mesh.points[uniq[:, 0]] + mesh.points[uniq[:, 1]])
    lookup = {p: k for k, p in enumerate(pairs)}
    return edge_id, mids, lookup


def refine_uniform(mesh: StaggeredMesh) -> StaggeredMesh:
    """Red refinement: 4 children per triangle, 8 per tetrahedron.

    Tetrahedra are split following Bey's rule, which cuts the inner
    octahedron along the diagonal joining the midpoints of edges 02 and 13.
    The returned mesh records ``parent_cell`` for every child.
    """
    d = mesh.dim
    edge_id, mids, lookup = _edge_midpoints(mesh)
    npts = len(mesh.points)
    points = np.vstack([mesh.points, mids])
    c = mesh.cells

    def m(i, j):
        return npts + edge_id[:, lookup[(min(i, j), max(i, j))]]

    def v(i):
        return c[:, i]

    if d == 2:
        children = [
            (v(0), m(0, 1), m(0, 2)),
            (m(0, 1), v(1), m(1, 2)),
            (m(0, 2), m(1, 2), v(2)),
            (m(0, 1), m(1, 2), m(0, 2)),
        ]
    else:
        children = [
            (v(0), m(0, 1), m(0, 2), m(0, 3)),
            (m(0, 1), v(1), m(1, 2), m(1, 3)),
            (m(0, 2), m(1, 2), v(2), m(2, 3)),
            (m(0, 3), m(1, 3), m(2, 3), v(3)),
            (m(0, 1), m(0, 2), m(0, 3), m(1, 3)),
            (m(0, 1), m(0, 2), m(1, 2), m(1, 3)),
            (m(0, 2), m(0, 3), m(1, 3), m(2, 3)),
            (m(0, 2), m(1, 2), m(1, 3), m(2, 3)),
        ]
    nchild = len(children)
    new_cells = np.stack([np.stack(ch, axis=1) for ch in children], axis=1).reshape(-1, d + 1)
    parent = np.repeat(np.arange(mesh.n_cells), nchild)
    return StaggeredMesh(points, new_cells, parent_cell=parent, check_duplicates=False)


# -- built-in meshes ------------------------------------------------------

def unit_triangle() -> StaggeredMesh:
    return StaggeredMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])


def equilateral_triangle() -> StaggeredMesh:
    return StaggeredMesh([[0, 0], [1, 0], [0.5, math.sqrt(3) / 2]], [[0, 1, 2]])


def two_triangle_square() -> StaggeredMesh:
    """Unit square cut along the diagonal (0,0)-(1,1); cell 0 is the lower triangle."""
    return StaggeredMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])


def criss_cross_square() -> StaggeredMesh:
    """Unit square split into four triangles meeting at its center."""
    pts = [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]]
    return StaggeredMesh(pts, [[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])


def unit_tetrahedron() -> StaggeredMesh:
    return StaggeredMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], [[0, 1, 2, 3]])


def two_tetrahedra() -> StaggeredMesh:
    """Two tetrahedra glued along the face with vertices e1, e2, e3."""
    pts = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]]
    return StaggeredMesh(pts, [[0, 1, 2, 3], [4, 1, 2, 3]])


def kuhn_cube() -> StaggeredMesh:
    """Unit cube split into the six path simplices from (0,0,0) to (1,1,1)."""
    pts = [[(k >> 0) & 1, (k >> 1) & 1, (k >> 2) & 1] for k in range(8)]
    cells = []
    for perm in ([0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]):
        idx, path = 0, [0]
        for axis in perm:
            idx |= 1 << axis
            path.append(idx)
        cells.append(path)
    return StaggeredMesh(pts, cells)


BUILTIN_MESHES = {
    "unit_triangle": unit_triangle,
    "equilateral_triangle": equilateral_triangle,
    "two_triangle_square": two_triangle_square,
    "criss_cross_square": criss_cross_square,
    "unit_tetrahedron": unit_tetrahedron,
    "two_tetrahedra": two_tetrahedra,
    "kuhn_cube": kuhn_cube,
}


# -- file formats ---------------------------------------------------------

def _strip(line):
    return line.split("#", 1)[0].strip()


def read_smesh(path) -> StaggeredMesh:
    """Read the native ASCII format: header ``d NP NC``, then points, then cells."""
    lines = [s for s in (_strip(l) for l in Path(path).read_text().splitlines()) if s]
    if not lines:
        raise MeshError(f"{path}: empty mesh file")
    try:
        d, npts, ncells = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise MeshError(f"{path}: malformed header {lines[0]!r}") from exc
    if d not in (2, 3):
        raise MeshError(f"{path}: dimension must be 2 or 3, got {d}")
    if len(lines) != 1 + npts + ncells:
        raise MeshError(f"{path}: expected {npts} points and {ncells} cells, "
                        f"found {len(lines) - 1} data lines")
    try:
        points = np.array([[float(t) for t in l.split()] for l in lines[1:1 + npts]])
        cells = np.array([[int(t) for t in l.split()] for l in lines[1 + npts:]])
    except ValueError as exc:
        raise MeshError(f"{path}: malformed data line ({exc})") from exc
    if points.shape != (npts, d) or cells.shape != (ncells, d + 1):
        raise MeshError(f"{path}: wrong number of entries per line")
    return StaggeredMesh(points, cells)


def write_smesh(mesh: StaggeredMesh, path) -> None:
    d = mesh.dim
    out = [f"{d} {len(mesh.points)} {mesh.n_cells}"]
    out += [" ".join(repr(float(x)) for x in p) for p in mesh.points]
    out += [" ".join(str(int(i)) for i in c) for c in mesh.cells]
    Path(path).write_text("\n".join(out) + "\n")


def read_gmsh22(path) -> StaggeredMesh:
    """Read a Gmsh 2.2 ASCII file, keeping triangles (type 2) or tetrahedra (type 4)."""
    lines = [l.strip() for l in Path(path).read_text().splitlines()]
    sections = {}
    i = 0
    try:
        while i < len(lines):
            if lines[i].startswith("$") and not lines[i].startswith("$End"):
                name = lines[i][1:]
                j = lines.index("$End" + name, i + 1)
                sections[name] = lines[i + 1:j]
                i = j + 1
            else:
                i += 1
    except ValueError as exc:
        raise MeshError(f"{path}: unterminated section") from exc
    fmt = sections.get("MeshFormat")
    if not fmt:
        raise MeshError(f"{path}: missing $MeshFormat")
    version, ftype = fmt[0].split()[:2]
    if not version.startswith("2") or ftype != "0":
        raise MeshError(f"{path}: only ASCII Gmsh 2.x is supported")
    if "Nodes" not in sections or "Elements" not in sections:
        raise MeshError(f"{path}: missing $Nodes or $Elements")
    try:
        nodes = sections["Nodes"]
        nn = int(nodes[0])
        ids, coords = [], []
        for l in nodes[1:1 + nn]:
            t = l.split()
            ids.append(int(t[0]))
            coords.append([float(x) for x in t[1:4]])
        elems = sections["Elements"]
        ne = int(elems[0])
        tris, tets = [], []
        for l in elems[1:1 + ne]:
            t = [int(x) for x in l.split()]
            etype, ntags = t[1], t[2]
            conn = t[3 + ntags:]
            if etype == 2:
                tris.append(conn[:3])
            elif etype == 4:
                tets.append(conn[:4])
    except (ValueError, IndexError) as exc:
        raise MeshError(f"{path}: malformed Gmsh data ({exc})") from exc
    coords = np.array(coords)
    index = {nid: k for k, nid in enumerate(ids)}
    conn = tets if tets else tris
    if not conn:
        raise MeshError(f"{path}: no triangles or tetrahedra found")
    try:
        cells = np.array([[index[n] for n in c] for c in conn])
    except KeyError as exc:
        raise MeshError(f"{path}: element references unknown node {exc}") from exc
    if tets:
        points = coords
    else:
        if np.any(np.abs(coords[:, 2]) > 0):
            raise MeshError(f"{path}: triangle mesh is not planar in z = 0")
        points = coords[:, :2]
    used = np.unique(cells)
    remap = -np.ones(len(points), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return StaggeredMesh(points[used], remap[cells])


def load_mesh(path, format: str | None = None) -> StaggeredMesh:
    """Load a mesh from ``path``; format is ``native-ascii`` or ``gmsh22``.

    When ``format`` is omitted it is inferred from the suffix (``.msh`` means
    Gmsh, anything else the native format).
    """
    path = Path(path)
    if not path.exists():
        raise MeshError(f"{path}: no such mesh file")
    if format is None:
        format = "gmsh22" if path.suffix == ".msh" else "native-ascii"
    if format in ("native-ascii", "native", "smesh"):
        return read_smesh(path)
    if format in ("gmsh22", "gmsh"):
        return read_gmsh22(path)
    raise MeshError(f"unknown mesh format {format!r}")
