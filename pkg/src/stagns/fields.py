"""Discrete fields, interpolation operators, truncation and discrete norms.

Cell fields are 1-D arrays with one value per cell.  Face vector fields are
``(n_faces, d)`` arrays; members of the velocity space carry exact zeros
on boundary faces.  Diamond fields (the piecewise constant reconstructions
on dual cells) use the same face indexing, with boundary diamonds excluded.
"""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .mesh import StaggeredMesh
from .quadrature import simplex_rule


@dataclass(frozen=True)
class SchemeParams:
    """Physical constants and stabilization exponents of the scheme."""

    mu: float = 1.0
    lam: float = 0.0
    a: float = 1.0
    gamma: float = 2.0
    Gamma: float = 20.0
    rho_star: float = 1.0
    xi1: float = 1.5
    xi2: float = 2.6
    xi3: float = 1.0
    stabilizer: str = "power_law"

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.mu + self.lam > 0:
            raise ValueError("mu + lambda must be positive")
        if not self.a > 0:
            raise ValueError("a must be positive")
        if not self.gamma > 1:
            raise ValueError("gamma must exceed 1")
        if not self.Gamma > self.gamma:
            raise ValueError("Gamma must exceed gamma")
        if not self.rho_star > 0:
            raise ValueError("rho_star must be positive")
        if min(self.xi1, self.xi2, self.xi3) < 0:
            raise ValueError("stabilization exponents must be non-negative")
        if self.stabilizer not in ("power_law", "linear"):
            raise ValueError(f"unknown stabilizer variant {self.stabilizer!r}")
        if self.stabilizer == "power_law" and not self.gamma > 1.5:
            raise ValueError("the power-law stabilizer requires gamma > 3/2")

    @property
    def eta(self) -> float:
        return (2.0 * self.gamma - 3.0) / self.gamma

    @property
    def stabilizer_power(self) -> float:
        """Exponent p of the density diffusion flux |x|^(p-1) x."""
        return 1.0 / self.eta if self.stabilizer == "power_law" else 1.0

    @property
    def has_artificial_pressure(self) -> bool:
        return self.stabilizer == "power_law"

    def replace(self, **changes) -> "SchemeParams":
        values = asdict(self)
        values.update(changes)
        return SchemeParams(**values)


# -- Crouzeix-Raviart fields ----------------------------------------------

def zero_boundary(mesh: StaggeredMesh, u):
    """Return a copy of ``u`` with boundary-face values set to zero."""
    u = np.array(u, dtype=float, copy=True)
    u[mesh.boundary_faces] = 0.0
    return u


def face_means(mesh: StaggeredMesh, v, degree: int = 3):
    """Mean of a function over every face by a simplex rule exact to ``degree``."""
    bary, w = simplex_rule(mesh.dim - 1, degree)
    X = np.einsum("qj,fjk->fqk", bary, mesh.points[mesh.faces])
    vals = np.asarray(v(X.reshape(-1, mesh.dim)), dtype=float)
    vals = vals.reshape(X.shape[0], X.shape[1], *vals.shape[1:])
    return np.tensordot(w, vals, axes=(0, 1))


def cr_interpolate(mesh: StaggeredMesh, v, degree: int = 3, homogeneous: bool = False):
    """Face-mean degrees of freedom of ``v`` (a map from (n, d) points to (n, d) values).

    With ``homogeneous=True`` the boundary values are overwritten by zero,
    giving a member of the velocity space.
    """
    u = face_means(mesh, v, degree)
    if homogeneous:
        u[mesh.boundary_faces] = 0.0
    return u


def cr_shape_values(mesh: StaggeredMesh, bary):
    """Values 1 - d*lambda_i of the local basis functions at barycentric points."""
    return 1.0 - mesh.dim * np.asarray(bary)


def cr_values(mesh: StaggeredMesh, u, bary):
    """Evaluate a face field in every cell at the barycentric points ``bary`` (nq, d+1).

    Returns an array of shape (n_cells, nq, ...) where the trailing shape is
    that of one degree of freedom.
    """
    phi = cr_shape_values(mesh, bary)                  # (nq, d+1)
    local = np.asarray(u)[mesh.cell_faces]             # (nc, d+1, ...)
    return np.tensordot(phi, local, axes=(1, 1)).swapaxes(0, 1)


def barycentric_coordinates(mesh: StaggeredMesh, K: int, x):
    x = np.asarray(x, dtype=float)
    lam_rest = mesh.barycentric_gradients[K, 1:] @ (x - mesh.points[mesh.cells[K, 0]])
    return np.concatenate([[1.0 - lam_rest.sum()], lam_rest])


def cr_evaluate(mesh: StaggeredMesh, u, K: int, x):
    """Value at point ``x`` of the affine restriction of ``u`` to cell ``K``."""
    lam = barycentric_coordinates(mesh, K, x)
    if lam.min() < -1e-10:
        raise ValueError(f"point {tuple(np.asarray(x))} lies outside cell {K}")
    phi = 1.0 - mesh.dim * lam
    return phi @ np.asarray(u)[mesh.cell_faces[K]]


def cell_average(mesh: StaggeredMesh, u):
    """Mean of a face field over each cell (the value at the centroid)."""
    return np.asarray(u)[mesh.cell_faces].mean(axis=1)


def broken_gradient(mesh: StaggeredMesh, u):
    """Per-cell gradient of a face field: (1/|K|) sum |sigma| u_sigma (x) n.

    For a vector field the result has shape (nc, d, d) with entry [c, i, j]
    holding d u_i / d x_j; for a scalar field the shape is (nc, d).
    """
    u = np.asarray(u, dtype=float)
    local = u[mesh.cell_faces]
    an = mesh.cell_normals * (mesh.face_measure[mesh.cell_faces] / mesh.cell_measure[:, None])[:, :, None]
    if u.ndim == 1:
        return np.einsum("ci,cik->ck", local, an)
    return np.einsum("cij,cik->cjk", local, an)


def broken_divergence(mesh: StaggeredMesh, u):
    return np.trace(broken_gradient(mesh, u), axis1=1, axis2=2)


def project_dual(mesh: StaggeredMesh, u):
    """Piecewise constant field on diamonds: u_sigma on interior diamonds, 0 elsewhere."""
    out = np.array(u, dtype=float, copy=True)
    out[mesh.boundary_faces] = 0.0
    return out


def upwind_density(mesh: StaggeredMesh, rho, u):
    """Upwind density on every face (owner value on boundary faces).

    On sigma = K|L the owner value is used whenever u_sigma . n_{K,sigma} >= 0.
    """
    rho = np.asarray(rho, dtype=float)
    K, L = mesh.face_cells[:, 0], mesh.face_cells[:, 1]
    un = np.einsum("fi,fi->f", np.asarray(u, dtype=float), mesh.face_normal)
    out = rho[K].copy()
    down = (un < 0) & (L >= 0)
    out[down] = rho[L[down]]
    return out


def project_upwind(mesh: StaggeredMesh, rho, u):
    """Upwind density on interior faces, aligned with ``mesh.interior_faces``."""
    return upwind_density(mesh, rho, u)[mesh.interior_faces]


def vertex_average(mesh: StaggeredMesh, p):
    """Nodal values of the continuous piecewise affine field averaging cell values.

    Each vertex receives the arithmetic mean of ``p`` over the cells sharing it.
    """
    p = np.asarray(p, dtype=float)
    npts = len(mesh.points)
    total = np.bincount(mesh.cells.ravel(), weights=np.repeat(p, mesh.dim + 1), minlength=npts)
    count = np.bincount(mesh.cells.ravel(), minlength=npts)
    out = np.zeros(npts)
    used = count > 0
    out[used] = total[used] / count[used]
    return out


def p1_values(mesh: StaggeredMesh, nodal, bary):
    """Evaluate a nodal piecewise affine field at barycentric points in every cell."""
    return np.asarray(nodal)[mesh.cells] @ np.asarray(bary).T


def truncate(rho, k: float):
    """Truncation T_k(rho) = min(rho, k), cellwise."""
    rho = np.asarray(rho, dtype=float)
    if k <= 0:
        raise ValueError("truncation level must be positive")
    if np.any(rho < 0):
        raise ValueError("truncation expects a non-negative density")
    return np.minimum(rho, k)


def dual_gradient(mesh: StaggeredMesh, u):
    """Gradient on diamonds: (|sigma|/|D_sigma|)(u_L - u_K) (x) n_{K,sigma}.

    u_K is the cell average of the face field.  Boundary diamonds get zero.
    Shape (n_faces, d, d), or (n_faces, d) for a scalar face field.
    """
    u = np.asarray(u, dtype=float)
    uK = cell_average(mesh, u)
    inner = mesh.interior_faces
    K, L = mesh.face_cells[inner, 0], mesh.face_cells[inner, 1]
    coef = (mesh.face_measure[inner] / mesh.diamond_measure[inner])
    jump = uK[L] - uK[K]
    out = np.zeros((mesh.n_faces,) + u.shape[1:] + (mesh.dim,))
    if u.ndim == 1:
        out[inner] = (coef * jump)[:, None] * mesh.face_normal[inner]
    else:
        out[inner] = coef[:, None, None] * jump[:, :, None] * mesh.face_normal[inner][:, None, :]
    return out


# -- norms ---------------------------------------------------------------

def _check_q(q):
    if q < 1:
        raise ValueError(f"norm exponent must be at least 1, got {q}")


def _pnorm(weights, absvals, p):
    if np.isinf(p):
        return float(absvals.max()) if absvals.size else 0.0
    return float((weights * absvals ** p).sum() ** (1.0 / p))


def cell_lp(mesh: StaggeredMesh, rho, p: float = 2.0) -> float:
    """L^p norm of a piecewise constant cell field."""
    _check_q(p)
    return _pnorm(mesh.cell_measure, np.abs(np.asarray(rho, dtype=float)), p)


def diamond_lp(mesh: StaggeredMesh, w, p: float = 2.0) -> float:
    """L^p norm of a diamond field (scalar or vector); boundary diamonds excluded."""
    _check_q(p)
    w = np.asarray(w, dtype=float)
    inner = mesh.interior_faces
    vals = np.abs(w[inner]) if w.ndim == 1 else np.linalg.norm(w[inner].reshape(len(inner), -1), axis=1)
    return _pnorm(mesh.diamond_measure[inner], vals, p)


def cr_lp(mesh: StaggeredMesh, u, p: float = 2.0, degree: int | None = None) -> float:
    """L^p norm of the piecewise affine reconstruction of a face field.

    For even integer p the default quadrature degree p integrates |u|^p
    exactly; the maximum norm is attained at cell vertices.
    """
    _check_q(p)
    u = np.asarray(u, dtype=float)
    if np.isinf(p):
        bary = np.eye(mesh.dim + 1)
        vals = cr_values(mesh, u, bary)
        return float(np.abs(vals).max() if u.ndim == 1 else np.linalg.norm(vals, axis=-1).max())
    if degree is None:
        degree = int(np.ceil(p)) + (0 if float(p).is_integer() and int(p) % 2 == 0 else 2)
    bary, w = simplex_rule(mesh.dim, degree)
    vals = cr_values(mesh, u, bary)
    mag = np.abs(vals) if u.ndim == 1 else np.linalg.norm(vals, axis=-1)
    return float((mesh.cell_measure * (mag ** p @ w)).sum() ** (1.0 / p))


def broken_seminorm(mesh: StaggeredMesh, u, q: float = 2.0) -> float:
    """Broken W^{1,q} seminorm: (sum_K |K| |grad u|_K|^q)^(1/q), Frobenius norm."""
    _check_q(q)
    G = broken_gradient(mesh, u)
    mag = np.sqrt((G.reshape(mesh.n_cells, -1) ** 2).sum(axis=1))
    return float((mesh.cell_measure * mag ** q).sum() ** (1.0 / q))


def edge_seminorm(mesh: StaggeredMesh, u, q: float = 2.0) -> float:
    """(sum_K h_K^(d-q) sum_{sigma, sigma' in K} |u_sigma - u_sigma'|^q)^(1/q)."""
    _check_q(q)
    local = np.asarray(u, dtype=float)[mesh.cell_faces]
    diff = local[:, :, None] - local[:, None, :]
    mag = np.abs(diff) if diff.ndim == 3 else np.linalg.norm(diff, axis=-1)
    per_cell = (mag ** q).sum(axis=(1, 2))
    return float((mesh.cell_diameter ** (mesh.dim - q) * per_cell).sum() ** (1.0 / q))


def density_seminorm(mesh: StaggeredMesh, rho, q: float = 2.0) -> float:
    """(sum_{interior sigma} |D_sigma| (|sigma|/|D_sigma|)^q |rho_K - rho_L|^q)^(1/q)."""
    _check_q(q)
    rho = np.asarray(rho, dtype=float)
    inner = mesh.interior_faces
    K, L = mesh.face_cells[inner, 0], mesh.face_cells[inner, 1]
    D = mesh.diamond_measure[inner]
    ratio = mesh.face_measure[inner] / D
    return float((D * ratio ** q * np.abs(rho[K] - rho[L]) ** q).sum() ** (1.0 / q))
