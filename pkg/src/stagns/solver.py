"""Nonlinear residual, Jacobian and homotopy-continuation Newton solver.

The unknown vector stacks the cell densities followed by the interior
velocity unknowns (interleaved by component).  The homotopy parameter
``delta`` multiplies the mass fluxes, the convection and both pressure
terms, so that ``delta = 0`` is a decoupled linear problem and
``delta = 1`` is the full scheme.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .fields import SchemeParams
from .mesh import StaggeredMesh
from .operators import (
    diffusion,
    face_field,
    fluxes,
    interior_vector,
    momentum_convection,
    pressure_gradient,
    solve_dual_fluxes,
    stabilizer_coefficients,
    stabilizer_derivative,
    viscous_matrices,
)
from .fields import upwind_density

log = logging.getLogger(__name__)


class ContinuationError(RuntimeError):
    """Newton failed along the homotopy; ``log`` holds the partial history."""

    def __init__(self, message, log=None, state=None):
        super().__init__(message)
        self.log = log
        self.state = state


class LinearSolverError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    delta_steps: int = 4
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    line_search_factor: float = 0.5
    line_search_max: int = 20
    jacobian_mode: str = "analytic"
    fd_step: float = 1e-7
    reg_eps: float = 1e-8
    max_bisections: int = 8
    polish_steps: int = 3

    def __post_init__(self):
        if self.delta_steps < 1:
            raise ValueError("delta_steps must be at least 1")
        if not (self.newton_tol > 0 and self.fd_step > 0 and self.reg_eps > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.line_search_factor < 1:
            raise ValueError("line_search_factor must lie in (0, 1)")
        if self.jacobian_mode not in ("analytic", "finite_difference"):
            raise ValueError(f"unknown jacobian mode {self.jacobian_mode!r}")


@dataclass
class DiscreteState:
    rho: np.ndarray
    u: np.ndarray
    delta: float = 1.0


@dataclass
class StepRecord:
    delta: float
    iterations: int
    residual: float
    converged: bool


@dataclass
class ConvergenceLog:
    steps: list = field(default_factory=list)

    def add(self, record: StepRecord):
        self.steps.append(record)
        log.info("delta=%.6g iterations=%d residual=%.3e converged=%s",
                 record.delta, record.iterations, record.residual, record.converged)

    def lines(self):
        return [f"{s.delta!r},{s.iterations},{s.residual!r},{int(s.converged)}" for s in self.steps]


# -- packing ---------------------------------------------------------------

def pack(mesh: StaggeredMesh, rho, u):
    return np.concatenate([np.asarray(rho, dtype=float), interior_vector(mesh, u)])


def unpack(mesh: StaggeredMesh, x):
    n = mesh.n_cells
    return np.array(x[:n]), face_field(mesh, x[n:])


# -- residual --------------------------------------------------------------

def _check_positive(params, rho):
    rho = np.asarray(rho)
    fractional = not (float(params.gamma).is_integer() and float(params.Gamma).is_integer()
                      and float(params.stabilizer_power).is_integer())
    if fractional and np.any(rho < 0):
        raise ValueError("density left positive cone")


def momentum_terms(mesh: StaggeredMesh, params: SchemeParams, rho, u):
    """Strong-form momentum pieces on diamonds: convection, viscous, pressure."""
    flux = fluxes(mesh, params, rho, u)
    conv = momentum_convection(mesh, flux, u)
    lap, gdiv = diffusion(mesh, u)
    visc = params.mu * lap + (params.mu + params.lam) * gdiv
    pres = params.a * pressure_gradient(mesh, rho, params.gamma)
    if params.has_artificial_pressure:
        pres = pres + mesh.mesh_size ** params.xi3 * pressure_gradient(mesh, rho, params.Gamma)
    return flux, conv, visc, pres


def assemble_residual(mesh: StaggeredMesh, params: SchemeParams, state: DiscreteState, forcing=None):
    """Residual of the delta-deformed scheme; ``forcing`` is the diamond projection of f."""
    rho = np.asarray(state.rho, dtype=float)
    _check_positive(params, rho)
    delta = state.delta
    h = mesh.mesh_size
    flux, conv, visc, pres = momentum_terms(mesh, params, rho, state.u)
    r_mass = delta * flux.stabilized.sum(axis=1) / mesh.cell_measure + h ** params.xi1 * (rho - params.rho_star)
    mom = delta * conv + visc + delta * pres
    if forcing is not None:
        mom = mom - forcing
    return np.concatenate([r_mass, interior_vector(mesh, mom)])


# -- Jacobian --------------------------------------------------------------

class _Triplets:
    def __init__(self):
        self.rows, self.cols, self.vals = [], [], []

    def add(self, r, c, v, mask=None):
        r, c, v = np.broadcast_arrays(r, c, v)
        if mask is not None:
            mask = np.broadcast_to(mask, r.shape)
            r, c, v = r[mask], c[mask], v[mask]
        self.rows.append(r.ravel())
        self.cols.append(c.ravel())
        self.vals.append(v.ravel())

    def matrix(self, n):
        return sp.csr_matrix((np.concatenate(self.vals),
                              (np.concatenate(self.rows), np.concatenate(self.cols))), shape=(n, n))


def _face_flux_derivatives(mesh, params, rho, u, reg_eps):
    """Derivatives of the owner-oriented stabilized face flux w.r.t. rho_K, rho_L, u_sigma."""
    K, L = mesh.face_cells[:, 0], mesh.face_cells[:, 1]
    inner = ~mesh.is_boundary_face
    Lc = np.maximum(L, 0)
    s = mesh.face_measure
    un = np.einsum("fi,fi->f", u, mesh.face_normal)
    owner_up = un >= 0
    rho_up = upwind_density(mesh, rho, u)
    coef = stabilizer_coefficients(mesh, params)
    dst = coef * stabilizer_derivative(params, np.where(inner, rho[K] - rho[Lc], 0.0), reg_eps)
    dK = np.where(inner, s * un * owner_up + dst, 0.0)
    dL = np.where(inner, s * un * ~owner_up - dst, 0.0)
    du = np.where(inner[:, None], (s * rho_up)[:, None] * mesh.face_normal, 0.0)
    return dK, dL, du


def _analytic_jacobian(mesh, params, state, reg_eps):
    d = mesh.dim
    N = mesh.n_cells
    n = N + d * mesh.n_interior
    rho = np.asarray(state.rho, dtype=float)
    u = np.asarray(state.u, dtype=float)
    delta = state.delta
    h = mesh.mesh_size
    K, L = mesh.face_cells[:, 0], mesh.face_cells[:, 1]
    Lc = np.maximum(L, 0)
    inner = ~mesh.is_boundary_face
    dof = mesh.face_dof
    comps = np.arange(d)
    T = _Triplets()

    # mass rows
    T.add(np.arange(N), np.arange(N), np.full(N, h ** params.xi1))
    dK, dL, du = _face_flux_derivatives(mesh, params, rho, u, reg_eps)
    f_in = np.nonzero(inner)[0]
    ucols = N + d * dof[f_in][:, None] + comps
    for row, sgn in ((K[f_in], 1.0), (Lc[f_in], -1.0)):
        w = sgn * delta / mesh.cell_measure[row]
        T.add(row, K[f_in], w * dK[f_in])
        T.add(row, Lc[f_in], w * dL[f_in])
        T.add(row[:, None], ucols, w[:, None] * du[f_in])

    # viscous rows (strong form: weak matrix divided by diamond measure)
    A_lap, A_div = viscous_matrices(mesh)
    visc = (params.mu * A_lap + (params.mu + params.lam) * A_div).tocoo()
    Dinv = 1.0 / np.repeat(mesh.diamond_measure[mesh.interior_faces], d)
    T.add(N + visc.row, N + visc.col, visc.data * Dinv[visc.row])

    # pressure rows
    if delta != 0.0:
        def dp(r):
            v = params.a * params.gamma * r ** (params.gamma - 1)
            if params.has_artificial_pressure:
                v = v + h ** params.xi3 * params.Gamma * r ** (params.Gamma - 1)
            return v
        coef = delta * mesh.face_measure[f_in] / mesh.diamond_measure[f_in]
        nrm = mesh.face_normal[f_in]
        rows = N + d * dof[f_in][:, None] + comps
        T.add(rows, Lc[f_in][:, None], (coef * dp(rho[Lc[f_in]]))[:, None] * nrm)
        T.add(rows, K[f_in][:, None], -(coef * dp(rho[K[f_in]]))[:, None] * nrm)

    # convection rows
    if delta != 0.0:
        cf = mesh.cell_faces                                      # (nc, d+1)
        cdof = dof[cf]
        sign = mesh.cell_face_sign
        Fbar_face = _stabilized_face_flux(mesh, params, rho, u)
        Fbar = Fbar_face[cf] * sign
        G = solve_dual_fluxes(Fbar)                               # (nc, d+1, d+1)
        Tm = solve_dual_fluxes(np.eye(d + 1))                     # Tm[m, i, j] = dG_ij / dFbar_m
        local = u[cf]                                             # (nc, d+1, d)
        Dloc = mesh.diamond_measure[cf]
        scale = 0.5 * delta / Dloc                                # (nc, d+1)
        valid_i = cdof >= 0
        # velocity-velocity block
        for i in range(d + 1):
            rows_i = N + d * cdof[:, i][:, None] + comps         # (nc, d)
            for j in range(d + 1):
                coeff = scale[:, i] * (G[:, i, j] if j != i else G[:, i, :].sum(axis=1))
                ok = valid_i[:, i] & (cdof[:, j] >= 0)
                cols_j = N + d * cdof[:, j][:, None] + comps
                T.add(rows_i, cols_j, coeff[:, None], mask=ok[:, None])
        # dependence through the stabilized fluxes
        pair_sum = local[:, :, None, :] + local[:, None, :, :]    # (nc, i, j, d)
        W = np.einsum("mij,cijk->cimk", Tm, pair_sum) * scale[:, :, None, None]
        for i in range(d + 1):
            rows_i = N + d * cdof[:, i][:, None] + comps
            for m in range(d + 1):
                fm = cf[:, m]
                ok = valid_i[:, i] & inner[fm]
                w = W[:, i, m, :] * sign[:, m][:, None]           # (nc, d)
                T.add(rows_i, K[fm][:, None], w * dK[fm][:, None], mask=ok[:, None])
                T.add(rows_i, Lc[fm][:, None], w * dL[fm][:, None], mask=ok[:, None])
                cols_m = N + d * dof[fm][:, None] + comps          # (nc, d)
                T.add(rows_i[:, :, None], cols_m[:, None, :],
                      w[:, :, None] * du[fm][:, None, :], mask=ok[:, None, None])
    return T.matrix(n)


def _stabilized_face_flux(mesh, params, rho, u):
    from .operators import face_mass_flux, stabilizer_flux
    return face_mass_flux(mesh, rho, u) + stabilizer_flux(mesh, params, rho)


def _fd_jacobian(mesh, params, state, forcing, step):
    x0 = pack(mesh, state.rho, state.u)
    n = len(x0)
    cols = []
    for j in range(n):
        hj = step * max(1.0, abs(x0[j]))
        xp, xm = x0.copy(), x0.copy()
        xp[j] += hj
        xm[j] -= hj
        rp = assemble_residual(mesh, params, DiscreteState(*unpack(mesh, xp), state.delta), forcing)
        rm = assemble_residual(mesh, params, DiscreteState(*unpack(mesh, xm), state.delta), forcing)
        cols.append((rp - rm) / (2 * hj))
    return sp.csr_matrix(np.column_stack(cols)) if cols else sp.csr_matrix((0, 0))


def assemble_jacobian(mesh: StaggeredMesh, params: SchemeParams, state: DiscreteState,
                      mode: str = "analytic", reg_eps: float = 1e-8, fd_step: float = 1e-7,
                      forcing=None):
    """Sparse Jacobian of :func:`assemble_residual` (smoothed density diffusion)."""
    rho = np.asarray(state.rho, dtype=float)
    _check_positive(params, rho)
    if mode == "analytic":
        return _analytic_jacobian(mesh, params, state, reg_eps)
    if mode == "finite_difference":
        return _fd_jacobian(mesh, params, state, forcing, fd_step)
    raise ValueError(f"unknown jacobian mode {mode!r}")


def linear_solve(A, b):
    """Sparse LU solve with one step of iterative refinement and a residual check."""
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    if A.shape[0] != A.shape[1]:
        raise LinearSolverError("matrix is not square")
    try:
        lu = splu(A)
    except RuntimeError as exc:
        raise LinearSolverError(f"numerically singular factorization: {exc}") from exc
    x = lu.solve(b)
    norm_A = abs(A).sum(axis=1).max() if A.nnz else 0.0
    for _ in range(3):
        r = b - A @ x
        bound = 1e-12 * (norm_A * np.abs(x).max(initial=0.0) + np.abs(b).max(initial=0.0))
        if not np.all(np.isfinite(x)):
            raise LinearSolverError("numerically singular factorization: non-finite solution")
        if np.abs(r).max(initial=0.0) <= bound:
            return x
        x = x + lu.solve(r)
    raise LinearSolverError(
        f"linear solve residual {np.abs(r).max():.3e} exceeds bound {bound:.3e}")


# -- Newton and continuation ---------------------------------------------

def _norm(r):
    return float(np.abs(r).max(initial=0.0))


def newton(mesh, params, config: SolverConfig, state: DiscreteState, forcing):
    """Damped Newton at fixed delta.  Returns (state, iterations, residual, converged)."""
    x = pack(mesh, state.rho, state.u)
    delta = state.delta
    N = mesh.n_cells

    def resid(xv):
        return assemble_residual(mesh, params, DiscreteState(*unpack(mesh, xv), delta), forcing)

    r = resid(x)
    norm = _norm(r)
    history = [norm]
    it = 0
    polished = 0
    while it < config.newton_max_iter and norm > 0.0:
        converged = norm <= config.newton_tol
        if converged and polished >= config.polish_steps:
            break
        J = assemble_jacobian(mesh, params, DiscreteState(*unpack(mesh, x), delta),
                              config.jacobian_mode, config.reg_eps, config.fd_step, forcing)
        dx = linear_solve(J, -r)
        alpha = 1.0
        accepted = False
        for _ in range(config.line_search_max + 1):
            xn = x + alpha * dx
            if np.all(xn[:N] > 0):
                rn = resid(xn)
                nn = _norm(rn)
                if nn < norm:
                    accepted = True
                    break
            alpha *= config.line_search_factor
        if not accepted:
            break
        it += 1
        x, r, previous, norm = xn, rn, norm, nn
        if converged:
            # extra steps past the tolerance, kept while they still pay off
            polished += 1
            if norm > 0.5 * previous:
                break
            continue
        history.append(norm)
        if norm > config.newton_tol and len(history) > 5 and norm > 0.99 * history[-6]:
            break
    return DiscreteState(*unpack(mesh, x), delta), it, norm, norm <= config.newton_tol


def linear_viscous_state(mesh: StaggeredMesh, params: SchemeParams, forcing):
    """The delta = 0 solution: rho = rho*, u solving the viscous system."""
    d = mesh.dim
    rho = np.full(mesh.n_cells, params.rho_star)
    if mesh.n_interior == 0:
        return DiscreteState(rho, np.zeros((mesh.n_faces, d)), 0.0)
    A_lap, A_div = viscous_matrices(mesh)
    A = params.mu * A_lap + (params.mu + params.lam) * A_div
    Dm = np.repeat(mesh.diamond_measure[mesh.interior_faces], d)
    b = np.zeros(A.shape[0]) if forcing is None else Dm * interior_vector(mesh, forcing)
    x = linear_solve(A, b)
    return DiscreteState(rho, face_field(mesh, x), 0.0)


def solve(mesh: StaggeredMesh, params: SchemeParams, config: SolverConfig | None = None,
          forcing=None, initial: DiscreteState | None = None):
    """Solve the scheme by continuation in delta from the linear viscous state.

    ``forcing`` is the diamond projection of f (an (n_faces, d) array) or None.
    With ``initial`` given, Newton is first tried directly at delta = 1 from
    that state, falling back to continuation when it fails.
    Returns (state, log); raises :class:`ContinuationError` on failure.
    """
    config = config or SolverConfig()
    history = ConvergenceLog()
    if initial is not None:
        start = DiscreteState(np.asarray(initial.rho, float), np.asarray(initial.u, float), 1.0)
        try:
            st, it, res, ok = newton(mesh, params, config, start, forcing)
        except LinearSolverError:
            ok = False
            it, res = 0, float("nan")
        history.add(StepRecord(1.0, it, res, ok))
        if ok:
            return st, history

    state = linear_viscous_state(mesh, params, forcing)
    res0 = _norm(assemble_residual(mesh, params, state, forcing))
    history.add(StepRecord(0.0, 0, res0, res0 <= max(config.newton_tol, 1e-10)))
    targets = [k / config.delta_steps for k in range(1, config.delta_steps + 1)]
    current = 0.0
    depth = 0
    while targets:
        target = targets[0]
        trial = DiscreteState(state.rho, state.u, target)
        try:
            st, it, res, ok = newton(mesh, params, config, trial, forcing)
        except LinearSolverError as exc:
            ok, it, res = False, 0, float("nan")
            log.warning("linear solver failure at delta=%g: %s", target, exc)
        history.add(StepRecord(target, it, res, ok))
        if ok:
            state, current = st, target
            targets.pop(0)
            depth = 0
            continue
        depth += 1
        if depth > config.max_bisections:
            raise ContinuationError(f"continuation failure at delta={target:.6g}", history, state)
        targets.insert(0, 0.5 * (current + target))
    return state, history


def inject_state(coarse: StaggeredMesh, fine: StaggeredMesh, state: DiscreteState) -> DiscreteState:
    """Transfer a state to a uniformly refined mesh.

    Child cells inherit the parent density; a child face takes the parent
    velocity evaluated at its barycenter, averaged over the (one or two)
    parents of its adjacent child cells.  Boundary faces get zero.
    """
    if fine.parent_cell is None:
        raise ValueError("fine mesh carries no parent map")
    parent = fine.parent_cell
    rho = np.asarray(state.rho, dtype=float)[parent]
    u_coarse = np.asarray(state.u, dtype=float)
    total = np.zeros((fine.n_faces, fine.dim))
    count = np.zeros(fine.n_faces)
    for side in (0, 1):
        child = fine.face_cells[:, side]
        ok = child >= 0
        P = parent[child[ok]]
        x = fine.face_barycenter[ok]
        lam_rest = np.einsum("fij,fj->fi", coarse.barycentric_gradients[P, 1:],
                             x - coarse.points[coarse.cells[P, 0]])
        lam = np.column_stack([1.0 - lam_rest.sum(axis=1), lam_rest])
        phi = 1.0 - coarse.dim * lam
        total[ok] += np.einsum("fi,fik->fk", phi, u_coarse[coarse.cell_faces[P]])
        count[ok] += 1
    u = total / count[:, None]
    u[fine.boundary_faces] = 0.0
    return DiscreteState(rho, u, state.delta)
