"""Discrete differential, convective and stabilization operators.

Face-indexed outputs ("diamond fields") have shape (n_faces, d) with zero
rows on boundary faces.  Momentum operators are returned in strong form,
i.e. integrals over a diamond divided by its measure.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from itertools import combinations

import numpy as np
import scipy.sparse as sp

from .fields import SchemeParams, broken_gradient, upwind_density
from .mesh import StaggeredMesh
from .quadrature import simplex_rule


@dataclass
class FluxSet:
    """Mass fluxes of one state.

    ``primal`` and ``stabilized`` have shape (n_cells, d+1), indexed by local
    face; ``dual`` has shape (n_cells, d+1, d+1) with ``dual[K, i, j]`` the
    flux leaving the half-diamond of local face ``i`` towards that of local
    face ``j`` inside cell ``K``.
    """

    primal: np.ndarray
    stabilized: np.ndarray
    dual: np.ndarray | None = None


def _h(mesh, h):
    return mesh.mesh_size if h is None else float(h)


def stabilizer_coefficients(mesh: StaggeredMesh, params: SchemeParams, h=None):
    """Per-face factor h^xi2 |sigma| (|sigma|/|D_sigma|)^p, zero on boundary faces."""
    p = params.stabilizer_power
    c = _h(mesh, h) ** params.xi2 * mesh.face_measure * (mesh.face_measure / mesh.diamond_measure) ** p
    return np.where(mesh.is_boundary_face, 0.0, c)


def stabilizer_function(params: SchemeParams, x, reg_eps: float | None = None):
    """|x|^(p-1) x, or its smoothed version (x^2 + eps^2)^((p-1)/2) x."""
    p = params.stabilizer_power
    if p == 1.0:
        return np.array(x, dtype=float)
    if reg_eps is None:
        return np.abs(x) ** (p - 1.0) * x
    return (x * x + reg_eps ** 2) ** ((p - 1.0) / 2.0) * x


def stabilizer_derivative(params: SchemeParams, x, reg_eps: float | None = 1e-8):
    """Derivative of :func:`stabilizer_function` (smoothed when ``reg_eps`` is given)."""
    p = params.stabilizer_power
    x = np.asarray(x, dtype=float)
    if p == 1.0:
        return np.ones_like(x)
    if reg_eps is None:
        return p * np.abs(x) ** (p - 1.0)
    s = x * x + reg_eps ** 2
    return s ** ((p - 1.0) / 2.0) + (p - 1.0) * x * x * s ** ((p - 3.0) / 2.0)


def stabilizer_flux(mesh: StaggeredMesh, params: SchemeParams, rho, h=None):
    """Density diffusion flux per face, oriented out of the owner cell."""
    rho = np.asarray(rho, dtype=float)
    K, L = mesh.face_cells[:, 0], mesh.face_cells[:, 1]
    jump = np.where(mesh.is_boundary_face, 0.0, rho[K] - rho[np.maximum(L, 0)])
    return stabilizer_coefficients(mesh, params, h) * stabilizer_function(params, jump)


def face_mass_flux(mesh: StaggeredMesh, rho, u):
    """|sigma| rho_sigma u_sigma . n_sigma per face (owner orientation, zero on boundary)."""
    u = np.asarray(u, dtype=float)
    un = np.einsum("fi,fi->f", u, mesh.face_normal)
    F = mesh.face_measure * upwind_density(mesh, rho, u) * un
    return np.where(mesh.is_boundary_face, 0.0, F)


def to_local(mesh: StaggeredMesh, face_values):
    """Distribute owner-oriented face scalars to (cell, local face) outward values."""
    return np.asarray(face_values)[mesh.cell_faces] * mesh.cell_face_sign


def primal_fluxes(mesh: StaggeredMesh, params: SchemeParams, rho, u, h=None) -> FluxSet:
    """Upwind primal fluxes and their stabilized counterparts."""
    F = face_mass_flux(mesh, rho, u)
    Fbar = F + stabilizer_flux(mesh, params, rho, h)
    return FluxSet(primal=to_local(mesh, F), stabilized=to_local(mesh, Fbar))


@lru_cache(maxsize=None)
def cell_topology(d: int):
    """Incidence matrix of the complete graph on the d+1 local faces of a simplex.

    Column e corresponds to the pair (i, j), i < j, listed in
    ``combinations(range(d+1), 2)``; it has +1 in row i and -1 in row j.
    """
    pairs = list(combinations(range(d + 1), 2))
    B = np.zeros((d + 1, len(pairs)))
    for e, (i, j) in enumerate(pairs):
        B[i, e] = 1.0
        B[j, e] = -1.0
    B.setflags(write=False)
    return B, tuple(pairs)


@lru_cache(maxsize=None)
def dual_flux_operator(d: int):
    """Pseudo-inverse of :func:`cell_topology`; identical for every cell."""
    B, _ = cell_topology(d)
    P = np.linalg.pinv(B)
    P.setflags(write=False)
    return P


def solve_dual_fluxes(Fbar):
    """Minimum-norm dual fluxes for an array of per-cell stabilized fluxes (n, d+1).

    The flux leaving half-diamond i plus the fluxes through its interior dual
    faces equals the cell total shared equally among the d+1 half-diamonds.
    """
    Fbar = np.asarray(Fbar, dtype=float)
    d = Fbar.shape[-1] - 1
    B, pairs = cell_topology(d)
    rhs = Fbar.sum(axis=-1, keepdims=True) / (d + 1) - Fbar
    g = rhs @ dual_flux_operator(d).T
    G = np.zeros(Fbar.shape + (d + 1,))
    for e, (i, j) in enumerate(pairs):
        G[..., i, j] = g[..., e]
        G[..., j, i] = -g[..., e]
    return G


def dual_fluxes(mesh: StaggeredMesh, flux: FluxSet) -> FluxSet:
    """Fill ``flux.dual`` with the minimum-norm solution of the half-diamond balances."""
    return replace(flux, dual=solve_dual_fluxes(flux.stabilized))


def fluxes(mesh: StaggeredMesh, params: SchemeParams, rho, u, h=None) -> FluxSet:
    """Primal, stabilized and dual fluxes in one call."""
    return dual_fluxes(mesh, primal_fluxes(mesh, params, rho, u, h))


def mass_residual(mesh: StaggeredMesh, params: SchemeParams, rho, u,
                  include_relaxation: bool = True, h=None):
    """Per cell (1/|K|) sum F-bar + h^xi1 (rho_K - rho*) (the last term optional)."""
    flux = primal_fluxes(mesh, params, rho, u, h)
    r = flux.stabilized.sum(axis=1) / mesh.cell_measure
    if include_relaxation:
        r = r + _h(mesh, h) ** params.xi1 * (np.asarray(rho, dtype=float) - params.rho_star)
    return r


def _scatter_faces(mesh, local_vectors):
    """Sum per (cell, local face) vectors into face rows, in fixed entity order."""
    nf = mesh.n_faces
    idx = mesh.cell_faces.ravel()
    vals = local_vectors.reshape(len(idx), -1)
    out = np.column_stack([np.bincount(idx, weights=vals[:, k], minlength=nf)
                           for k in range(vals.shape[1])])
    return out.reshape((nf,) + local_vectors.shape[2:])


def momentum_convection(mesh: StaggeredMesh, flux: FluxSet, u):
    """Centered convection on diamonds: (1/|D|) sum_eps F_{sigma,eps} (u_sigma + u_sigma')/2."""
    if flux.dual is None:
        raise ValueError("dual fluxes are required; call dual_fluxes first")
    local = np.asarray(u, dtype=float)[mesh.cell_faces]            # (nc, d+1, d)
    G = flux.dual
    contrib = 0.5 * (np.einsum("cij,cjk->cik", G, local)
                     + G.sum(axis=2)[:, :, None] * local)
    out = _scatter_faces(mesh, contrib) / mesh.diamond_measure[:, None]
    out[mesh.boundary_faces] = 0.0
    return out


def diffusion(mesh: StaggeredMesh, u, boundary_rows: bool = False):
    """Return (-Delta_E u, -(grad div)_E u) on diamonds.

    Row sigma is (1/|D_sigma|) sum_K int_K grad u . grad zeta_sigma, and the
    same with div u in place of grad u.  Boundary rows are zeroed unless
    ``boundary_rows`` is set.
    """
    G = broken_gradient(mesh, u)                                  # (nc, d, d)
    an = mesh.cell_normals * mesh.face_measure[mesh.cell_faces][:, :, None]
    lap = np.einsum("cab,cib->cia", G, an)
    div = np.trace(G, axis1=1, axis2=2)
    gdiv = div[:, None, None] * an
    D = mesh.diamond_measure[:, None]
    lap_f = _scatter_faces(mesh, lap) / D
    gdiv_f = _scatter_faces(mesh, gdiv) / D
    if not boundary_rows:
        lap_f[mesh.boundary_faces] = 0.0
        gdiv_f[mesh.boundary_faces] = 0.0
    return lap_f, gdiv_f


def pressure_gradient(mesh: StaggeredMesh, rho, exponent: float):
    """Diamond gradient (|sigma|/|D_sigma|)(rho_L^e - rho_K^e) n_{K,sigma}."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0) and not float(exponent).is_integer():
        raise ValueError("density left positive cone")
    p = rho ** exponent
    out = np.zeros((mesh.n_faces, mesh.dim))
    inner = mesh.interior_faces
    K, L = mesh.face_cells[inner, 0], mesh.face_cells[inner, 1]
    coef = mesh.face_measure[inner] / mesh.diamond_measure[inner] * (p[L] - p[K])
    out[inner] = coef[:, None] * mesh.face_normal[inner]
    return out


def broken_calculus(mesh: StaggeredMesh, u):
    """Per-cell gradient, divergence and curl of a face vector field.

    In 2D the curl is the scalar d1 u2 - d2 u1.
    """
    G = broken_gradient(mesh, u)
    div = np.trace(G, axis1=1, axis2=2)
    if mesh.dim == 2:
        curl = G[:, 1, 0] - G[:, 0, 1]
    else:
        curl = np.stack([G[:, 2, 1] - G[:, 1, 2], G[:, 0, 2] - G[:, 2, 0], G[:, 1, 0] - G[:, 0, 1]], axis=1)
    return G, div, curl


def half_diamond_vertices(mesh: StaggeredMesh):
    """Vertices of every half-diamond: the face vertices plus the cell centroid.

    Shape (n_cells, d+1, d+1, d) indexed by (cell, local face, vertex, coord).
    """
    d = mesh.dim
    fv = mesh.points[mesh.faces[mesh.cell_faces]]                 # (nc, d+1, d, d)
    cent = np.broadcast_to(mesh.cell_centroid[:, None, None, :], fv.shape[:2] + (1, d))
    return np.concatenate([fv, cent], axis=2)


def source_projection(mesh: StaggeredMesh, f, degree: int = 2):
    """Diamond averages (1/|D_sigma|) int_{D_sigma} f by half-diamond quadrature."""
    bary, w = simplex_rule(mesh.dim, degree)
    V = half_diamond_vertices(mesh)
    X = np.einsum("qv,cfvk->cfqk", bary, V)
    vals = np.asarray(f(X.reshape(-1, mesh.dim)), dtype=float).reshape(X.shape[:3] + (-1,))
    local = np.einsum("q,cfqk->cfk", w, vals) * mesh.half_diamond_measure[:, :, None]
    out = _scatter_faces(mesh, local) / mesh.diamond_measure[:, None]
    out[mesh.boundary_faces] = 0.0
    return out


def face_mean_gradient(mesh: StaggeredMesh, phi, degree: int = 5):
    """Per-cell gradient (1/|K|) sum |sigma| phi_sigma n_{K,sigma} of a smooth function.

    phi_sigma are face means; for vector-valued phi the result is (nc, m, d).
    """
    from .fields import face_means

    values = face_means(mesh, phi, degree)
    return broken_gradient(mesh, values)


# -- assembled matrices ---------------------------------------------------

def _local_gradients(mesh):
    """g_i = |sigma_i| n_{K,i} / |K|, the gradient of the local basis function i."""
    return mesh.cell_normals * (mesh.face_measure[mesh.cell_faces] / mesh.cell_measure[:, None])[:, :, None]


def velocity_index(mesh: StaggeredMesh, faces, comp):
    """Position of velocity unknown (face, component) in the interleaved ordering."""
    return mesh.dim * mesh.face_dof[faces] + comp


def viscous_matrices(mesh: StaggeredMesh):
    """Weak stiffness matrices over interior velocity unknowns.

    Returns (A_lap, A_div) with u^T A_lap v = int grad u : grad v and
    u^T A_div v = int div u div v.  Unknowns are interleaved: face dof k,
    component c sits at position d*k + c.
    """
    d = mesh.dim
    n = d * mesh.n_interior
    g = _local_gradients(mesh)
    vol = mesh.cell_measure
    dof = mesh.face_dof[mesh.cell_faces]                          # (nc, d+1)
    gg = np.einsum("cik,cjk->cij", g, g) * vol[:, None, None]
    rows, cols, lap, div = [], [], [], []
    for i in range(d + 1):
        for j in range(d + 1):
            ok = (dof[:, i] >= 0) & (dof[:, j] >= 0)
            for a in range(d):
                for b in range(d):
                    rows.append(d * dof[ok, i] + a)
                    cols.append(d * dof[ok, j] + b)
                    lap.append(gg[ok, i, j] if a == b else np.zeros(ok.sum()))
                    div.append(vol[ok] * g[ok, i, a] * g[ok, j, b])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    A_lap = sp.csr_matrix((np.concatenate(lap), (rows, cols)), shape=(n, n))
    A_div = sp.csr_matrix((np.concatenate(div), (rows, cols)), shape=(n, n))
    return A_lap, A_div


def divergence_matrix(mesh: StaggeredMesh):
    """Matrix B with (B u)_K = sum_sigma |sigma| u_sigma . n_{K,sigma} = |K| div(u)_K."""
    d = mesh.dim
    dof = mesh.face_dof[mesh.cell_faces]
    an = mesh.cell_normals * mesh.face_measure[mesh.cell_faces][:, :, None]
    rows, cols, vals = [], [], []
    cells = np.arange(mesh.n_cells)
    for i in range(d + 1):
        ok = dof[:, i] >= 0
        for a in range(d):
            rows.append(cells[ok])
            cols.append(d * dof[ok, i] + a)
            vals.append(an[ok, i, a])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(mesh.n_cells, d * mesh.n_interior))


def interior_vector(mesh: StaggeredMesh, u):
    """Interleaved vector of interior velocity unknowns."""
    return np.asarray(u, dtype=float)[mesh.interior_faces].ravel()


def face_field(mesh: StaggeredMesh, x):
    """Inverse of :func:`interior_vector`: a face field with zero boundary rows."""
    u = np.zeros((mesh.n_faces, mesh.dim))
    u[mesh.interior_faces] = np.asarray(x, dtype=float).reshape(-1, mesh.dim)
    return u
