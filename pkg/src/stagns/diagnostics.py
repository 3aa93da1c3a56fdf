"""Executable checks of the discrete identities and estimates of the scheme.

Every check returns a list of :class:`CheckResult` records.  Checks whose
preconditions are not met (typically: the state does not solve the mass
equation) are reported with status ``info`` instead of failing.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import splu

from .fields import (
    SchemeParams,
    broken_divergence,
    broken_gradient,
    broken_seminorm,
    cell_lp,
    cr_interpolate,
    cr_values,
    density_seminorm,
    dual_gradient,
    upwind_density,
)
from .forcing import GRADIENT_BUBBLE, STREAM_BUBBLE
from .mesh import StaggeredMesh
from .operators import (
    diffusion,
    divergence_matrix,
    fluxes,
    momentum_convection,
    pressure_gradient,
    stabilizer_flux,
    viscous_matrices,
)
from .quadrature import simplex_rule

MASS_GATE = 1e-10


@dataclass
class CheckResult:
    name: str
    status: str            # "pass", "fail" or "info"
    value: float = float("nan")
    bound: float = float("nan")
    tol: float = float("nan")
    note: str = ""


def _result(name, ok, value, bound, tol, note=""):
    return CheckResult(name, "pass" if ok else "fail", float(value), float(bound), float(tol), note)


def _info(name, note, value=float("nan")):
    return CheckResult(name, "info", float(value), float("nan"), float("nan"), note)


@dataclass
class DiagnosticsReport:
    results: list = field(default_factory=list)

    def extend(self, results):
        names = {r.name for r in self.results}
        for r in results:
            if r.name in names:
                raise ValueError(f"duplicate check name {r.name!r}")
            names.add(r.name)
            self.results.append(r)

    @property
    def passed(self) -> bool:
        return all(r.status != "fail" for r in self.results)

    def failures(self):
        return [r for r in self.results if r.status == "fail"]

    def __getitem__(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "status", "value", "bound", "tol"])
        for r in sorted(self.results, key=lambda r: r.name):
            w.writerow([r.name, r.status, repr(r.value), repr(r.bound), repr(r.tol)])
        return buf.getvalue()


# -- exponent conditions --------------------------------------------------

def exponent_margins(params: SchemeParams) -> dict:
    """Both sides of the exponent inequalities for the power-law variant."""
    eta, G = params.eta, params.Gamma
    e = 3.0 / (1.0 + eta) + params.xi3
    return {
        "ii_lhs": 5.0 / (4.0 * G) * e,
        "ii_rhs": eta / (1.0 + eta),
        "iii_lower": 1.0 / eta + 5.0 / (4.0 * eta * G) * e,
        "iii_upper": (1.0 + eta) / eta - 5.0 / (4.0 * G) * e,
    }


def check_exponents(params: SchemeParams, dim: int):
    if params.stabilizer == "power_law":
        m = exponent_margins(params)
        return [
            _result("exponent_i", params.xi1 > 1.0, params.xi1, 1.0, 0.0,
                    "condition (i): xi1 > 1"),
            _result("exponent_ii", m["ii_lhs"] < m["ii_rhs"], m["ii_lhs"], m["ii_rhs"], 0.0,
                    "condition (ii)"),
            _result("exponent_iii_lower", m["iii_lower"] < params.xi2, params.xi2, m["iii_lower"], 0.0,
                    "condition (iii), lower bound on xi2"),
            _result("exponent_iii_upper", params.xi2 < m["iii_upper"], params.xi2, m["iii_upper"], 0.0,
                    "condition (iii), upper bound on xi2"),
        ]
    xi1_bound = 1.0 if dim == 3 else 0.0
    out = [
        _result("exponent_linear_xi1", params.xi1 > xi1_bound, params.xi1, xi1_bound, 0.0,
                f"linear variant: xi1 > {xi1_bound:g}"),
        _result("exponent_linear_xi2_lower", params.xi2 > 1.5, params.xi2, 1.5, 0.0,
                "linear variant: xi2 > 3/2"),
        _result("exponent_linear_xi2_upper", params.xi2 < 2.0, params.xi2, 2.0, 0.0,
                "linear variant: xi2 < 2"),
    ]
    gamma_bound = 3.0 if dim == 3 else 2.0
    note = "within" if params.gamma > gamma_bound else "outside"
    out.append(_info("exponent_linear_gamma_range",
                     f"gamma {note} the range gamma > {gamma_bound:g} covered by the linear variant",
                     params.gamma))
    return out


# -- state-based checks ---------------------------------------------------

def _delta(state):
    return float(getattr(state, "delta", 1.0))


def scheme_mass_residual(mesh, params, state):
    """Mass residual of the delta-deformed scheme for this state."""
    rho = np.asarray(state.rho, dtype=float)
    flux = fluxes(mesh, params, rho, state.u)
    return (_delta(state) * flux.stabilized.sum(axis=1) / mesh.cell_measure
            + mesh.mesh_size ** params.xi1 * (rho - params.rho_star))


def _gate(mesh, params, state, name):
    r = float(np.abs(scheme_mass_residual(mesh, params, state)).max())
    if r > MASS_GATE:
        return _info(name, "mass residual too large", r)
    return None


def check_positivity(mesh, params, state):
    gate = _gate(mesh, params, state, "positivity")
    if gate:
        return [gate]
    div = broken_divergence(mesh, state.u)
    h = mesh.mesh_size
    rho_bar = params.rho_star / (1.0 + h ** (-params.xi1) * max(0.0, float(div.max())))
    rmin = float(np.min(state.rho))
    return [_result("positivity", rmin >= rho_bar - 1e-9, rmin, rho_bar, 1e-9)]


@dataclass(frozen=True)
class Renormalizer:
    """A function b with a (right) derivative used in the renormalization identity."""

    name: str
    b: Callable
    db: Callable
    convex: bool
    beta: float | None = None


def power_renormalizer(beta: float) -> Renormalizer:
    return Renormalizer(f"power_{beta:g}", lambda t: t ** beta,
                        lambda t: beta * t ** (beta - 1.0), beta >= 1.0, beta)


def truncation_renormalizer(M: float) -> Renormalizer:
    """b = T_M with right derivative 1 below M and 0 from M on (not convex)."""
    return Renormalizer(f"truncation_{M:.6g}", lambda t: np.minimum(t, M),
                        lambda t: np.where(t < M, 1.0, 0.0), False)


def renormalization_terms(mesh, params, state, b: Renormalizer):
    """Pieces of the discrete renormalization identity.

    Returns a dict with the divergence term A = int (b'(rho) rho - b(rho)) div u,
    the remainders R1, R2, R3 and the identity residual
    delta (A + R1 + R2) + R3, which vanishes when the mass equation holds.
    """
    rho = np.asarray(state.rho, dtype=float)
    u = np.asarray(state.u, dtype=float)
    delta = _delta(state)
    bv, dbv = np.asarray(b.b(rho), float), np.asarray(b.db(rho), float)
    if not (np.all(np.isfinite(bv)) and np.all(np.isfinite(dbv))):
        raise ValueError(f"renormalization function {b.name} is not finite on the density range")
    div = broken_divergence(mesh, u)
    A = float((mesh.cell_measure * (dbv * rho - bv) * div).sum())

    inner = mesh.interior_faces
    K, L = mesh.face_cells[inner, 0], mesh.face_cells[inner, 1]
    rs = upwind_density(mesh, rho, u)[inner]
    brs = np.asarray(b.b(rs), float)
    rK = dbv[K] * (rs - rho[K]) + bv[K] - brs
    rL = dbv[L] * (rs - rho[L]) + bv[L] - brs
    un = np.einsum("fi,fi->f", u[inner], mesh.face_normal[inner])
    R1 = float((mesh.face_measure[inner] * (rK - rL) * un).sum())
    st = stabilizer_flux(mesh, params, rho)[inner]
    R2 = float((st * (dbv[K] - dbv[L])).sum())
    R3 = float(mesh.mesh_size ** params.xi1 * (mesh.cell_measure * dbv * (rho - params.rho_star)).sum())
    out = {"A": A, "R1": R1, "R2": R2, "R3": R3,
           "identity": delta * (A + R1 + R2) + R3,
           "scale": max(1.0, float((mesh.cell_measure * np.abs(dbv)).sum()))}
    if b.beta is not None and b.beta > 1.0:
        beta = b.beta
        lo = np.minimum(rho[K] ** (beta - 2.0), rho[L] ** (beta - 2.0))
        out["R1_lower"] = float(0.5 * beta * (mesh.face_measure[inner] * lo * (rho[L] - rho[K]) ** 2
                                              * np.abs(un)).sum())
        out["R2_power"] = float(beta / (beta - 1.0)
                                * (st * (rho[K] ** (beta - 1.0) - rho[L] ** (beta - 1.0))).sum())
        out["A_power"] = float((mesh.cell_measure * rho ** beta * div).sum())
    return out


def check_renormalization(mesh, params, state, b: Renormalizer):
    name = f"renorm_{b.name}"
    gate = _gate(mesh, params, state, name)
    if gate:
        return [gate]
    t = renormalization_terms(mesh, params, state, b)
    tol = 1e-9 * t["scale"]
    out = [_result(name, abs(t["identity"]) <= tol, abs(t["identity"]), 0.0, tol)]
    for key in ("R1", "R2", "R3"):
        rname = f"{name}_{key}"
        if b.convex:
            out.append(_result(rname, t[key] >= -1e-12, t[key], 0.0, 1e-12))
        else:
            out.append(_info(rname, "sign not asserted for a non-convex function", t[key]))
    if "R1_lower" in t:
        out.append(_result(f"{name}_R1_lower", t["R1_lower"] >= 0.0, t["R1_lower"], 0.0, 0.0))
        out.append(_result(f"{name}_R2_power", t["R2_power"] >= -1e-12, t["R2_power"], 0.0, 1e-12))
        if _delta(state) > 0:
            total = t["A_power"] + t["R1_lower"] + t["R2_power"]
            out.append(_result(f"{name}_power_inequality", total <= tol, total, 0.0, tol))
    return out


def dual_mass_defect(mesh, params, state):
    """Per interior diamond: delta * sum of dual fluxes + h^xi1 |D| (rho_D - rho*)."""
    rho = np.asarray(state.rho, dtype=float)
    flux = fluxes(mesh, params, rho, state.u)
    out_local = flux.dual.sum(axis=2)                              # (nc, d+1)
    total = np.bincount(mesh.cell_faces.ravel(), weights=out_local.ravel(), minlength=mesh.n_faces)
    mass = np.bincount(mesh.cell_faces.ravel(),
                       weights=(mesh.half_diamond_measure * (rho - params.rho_star)[:, None]).ravel(),
                       minlength=mesh.n_faces)
    defect = _delta(state) * total + mesh.mesh_size ** params.xi1 * mass
    return defect[mesh.interior_faces], flux


def check_dual_mass_balance(mesh, params, state):
    gate = _gate(mesh, params, state, "dual_mass_balance")
    if gate:
        return [gate]
    if mesh.n_interior == 0:
        return [_info("dual_mass_balance", "no interior diamonds")]
    defect, flux = dual_mass_defect(mesh, params, state)
    tol = 1e-10 * max(1.0, float(np.abs(flux.stabilized).max()))
    worst = float(np.abs(defect).max())
    return [_result("dual_mass_balance", worst <= tol, worst, 0.0, tol)]


def check_mass_conservation(mesh, params, state):
    gate = _gate(mesh, params, state, "mass_conservation")
    if gate:
        return [gate]
    target = params.rho_star * mesh.volume
    err = abs(float((mesh.cell_measure * state.rho).sum()) - target) / target
    return [_result("mass_conservation", err <= 1e-10, err, 0.0, 1e-10)]


def energy_terms(mesh, params, state, forcing=None):
    """Viscous energy, work of the forcing and the mass-relaxation correction."""
    u = np.asarray(state.u, dtype=float)
    rho = np.asarray(state.rho, dtype=float)
    inner = mesh.interior_faces
    Dm = mesh.diamond_measure[inner]
    lhs = (params.mu * broken_seminorm(mesh, u) ** 2
           + (params.mu + params.lam) * cell_lp(mesh, broken_divergence(mesh, u)) ** 2)
    work = 0.0 if forcing is None else float((Dm * np.einsum("fi,fi->f", forcing[inner], u[inner])).sum())
    rho_D = np.bincount(mesh.cell_faces.ravel(),
                        weights=(mesh.half_diamond_measure * rho[:, None]).ravel(),
                        minlength=mesh.n_faces)[inner] / Dm
    speed2 = (u[inner] ** 2).sum(axis=1)
    corr = 0.5 * mesh.mesh_size ** params.xi1 * abs(float((Dm * (rho_D - params.rho_star) * speed2).sum()))
    crude = mesh.mesh_size ** params.xi1 * mesh.volume * params.rho_star * float(speed2.max(initial=0.0))
    return {"lhs": lhs, "work": work, "correction": corr, "crude": crude}


def check_energy(mesh, params, state, forcing=None):
    gate = _gate(mesh, params, state, "energy")
    if gate:
        return [gate]
    e = energy_terms(mesh, params, state, forcing)
    rhs = e["work"] + e["correction"]
    out = [_result("energy", e["lhs"] <= rhs + 1e-8 * abs(rhs), e["lhs"], rhs, 1e-8 * abs(rhs)),
           _result("energy_crude", e["lhs"] <= e["work"] + e["crude"] + 1e-8, e["lhs"],
                   e["work"] + e["crude"], 1e-8)]
    if _delta(state) == 0.0:
        tol = 1e-10 * max(1.0, abs(e["work"]))
        gap = abs(e["lhs"] - e["work"])
        out.append(_result("energy_linear_equality", gap <= tol, gap, 0.0, tol))
    return out


def effective_viscous_flux(mesh, params, state):
    """(2 mu + lambda) div(u)_K - a rho_K^gamma per cell."""
    div = broken_divergence(mesh, state.u)
    return (2.0 * params.mu + params.lam) * div - params.a * np.asarray(state.rho, float) ** params.gamma


def check_effective_viscous_flux(mesh, params, state):
    w = effective_viscous_flux(mesh, params, state)
    ok = bool(np.all(np.isfinite(w)))
    return [_result("effective_viscous_flux_finite", ok, float(np.abs(w).max()), float("inf"), 0.0)]


# -- inf-sup --------------------------------------------------------------

def infsup_operators(mesh):
    """Divergence matrix B, velocity stiffness A and pressure masses (diagonal)."""
    if mesh.n_interior == 0:
        raise ValueError("mesh too small: no interior velocity unknowns")
    A, _ = viscous_matrices(mesh)
    return divergence_matrix(mesh), A, mesh.cell_measure


def estimate_infsup(mesh: StaggeredMesh) -> float:
    """Discrete inf-sup constant for zero-mean pressures (dense eigenproblem)."""
    B, A, m = infsup_operators(mesh)
    lu = splu(A.tocsc())
    X = lu.solve(B.T.toarray())
    S = B @ X                                                     # B A^-1 B^T
    S = 0.5 * (S + S.T)
    w = 1.0 / np.sqrt(m)
    C = w[:, None] * S * w[None, :]
    q = np.sqrt(m / m.sum())
    Q = sla.null_space(q[None, :])
    if Q.shape[1] == 0:
        raise ValueError("mesh too small: no zero-mean pressures")
    ev = np.linalg.eigvalsh(Q.T @ C @ Q)
    return float(math.sqrt(max(ev[0], 0.0)))


def check_infsup(mesh, max_cells: int = 2048):
    if mesh.n_interior == 0 or mesh.n_cells < 2:
        return [_info("infsup", "no interior faces or zero-mean pressures")]
    if mesh.n_cells > max_cells:
        return [_info("infsup", f"skipped above {max_cells} cells")]
    beta = estimate_infsup(mesh)
    return [_result("infsup", beta > 1e-10, beta, 0.0, 1e-10)]


# -- Fortin operator ------------------------------------------------------

def _is_unit_box(mesh):
    lo, hi = mesh.points.min(axis=0), mesh.points.max(axis=0)
    return np.allclose(lo, 0.0, atol=1e-14) and np.allclose(hi, 1.0, atol=1e-14) \
        and abs(mesh.volume - 1.0) < 1e-12


def fortin_defect(mesh, field, rng, n_samples: int = 20):
    """max over random p of |int p div(I u) - int p div u|."""
    degree = field.fortin_degree(mesh.dim)
    Iu = cr_interpolate(mesh, field.velocity, degree=degree, homogeneous=True)
    lhs_cell = mesh.cell_measure * broken_divergence(mesh, Iu)
    bary, w = simplex_rule(mesh.dim, degree)
    X = np.einsum("qv,cvk->cqk", bary, mesh.points[mesh.cells])
    divu = field.divergence(X.reshape(-1, mesh.dim)).reshape(X.shape[:2])
    rhs_cell = mesh.cell_measure * (divu @ w)
    P = rng.standard_normal((n_samples, mesh.n_cells))
    return float(np.abs(P @ (lhs_cell - rhs_cell)).max())


def check_fortin(mesh, field, rng=None, n_samples: int = 20):
    name = f"fortin_{field.name}"
    if not _is_unit_box(mesh):
        return [_info(name, "field vanishes on the unit square/cube only")]
    rng = rng if rng is not None else np.random.default_rng(0)
    err = fortin_defect(mesh, field, rng, n_samples)
    return [_result(name, err <= field.fortin_tol, err, 0.0, field.fortin_tol)]


# -- convective remainder -------------------------------------------------

def conv_remainder(mesh, params, state, v):
    """R_conv(rho, u, v) and the right-hand side of its bound with constant 1."""
    rho = np.asarray(state.rho, dtype=float)
    u = np.asarray(state.u, dtype=float)
    v = np.asarray(v, dtype=float)
    inner = mesh.interior_faces
    Dm = mesh.diamond_measure[inner]
    flux = fluxes(mesh, params, rho, u)
    conv = momentum_convection(mesh, flux, u)
    first = float((Dm * np.einsum("fi,fi->f", conv[inner], v[inner])).sum())
    Gv = dual_gradient(mesh, v)[inner]
    rs = upwind_density(mesh, rho, u)[inner]
    second = float((Dm * rs * np.einsum("fi,fij,fj->f", u[inner], Gv, u[inner])).sum())
    value = first + second

    h = mesh.mesh_size
    eta, G = params.eta, params.Gamma
    e = 3.0 / (1.0 + eta) + params.xi3
    art = cell_lp(mesh, h ** params.xi3 * rho ** G, 1.0 + eta)
    nu, nv = broken_seminorm(mesh, u), broken_seminorm(mesh, v)
    bound = (h ** (0.5 - e / G) * art ** (1.0 / G) * nu ** 2 * nv
             + h ** (params.xi2 - 1.0 / eta - e / (eta * G)) * art ** (1.0 / (eta * G)) * nu * nv)
    return value, bound


# -- operator and field invariants ----------------------------------------

def _random_velocity(mesh, rng):
    u = rng.standard_normal((mesh.n_faces, mesh.dim))
    u[mesh.boundary_faces] = 0.0
    return u


def duality_defects(mesh, u, v, p):
    """Relative defects of the three discrete integration-by-parts identities."""
    inner = mesh.interior_faces
    Dm = mesh.diamond_measure[inner]
    lap, gdiv = diffusion(mesh, u)
    Gu, Gv = broken_gradient(mesh, u), broken_gradient(mesh, v)
    du, dv = broken_divergence(mesh, u), broken_divergence(mesh, v)
    vol = mesh.cell_measure
    pairs = [
        ((Dm * np.einsum("fi,fi->f", lap[inner], v[inner])).sum(), (vol * np.einsum("cij,cij->c", Gu, Gv)).sum()),
        ((Dm * np.einsum("fi,fi->f", gdiv[inner], v[inner])).sum(), (vol * du * dv).sum()),
        ((Dm * np.einsum("fi,fi->f", pressure_gradient(mesh, p, 1.0)[inner], v[inner])).sum(),
         -(vol * p * dv).sum()),
    ]
    return [abs(a - b) / max(1.0, abs(b)) for a, b in pairs]


def check_dualities(mesh, rng, n_pairs: int = 100):
    worst = np.zeros(3)
    for _ in range(n_pairs):
        u, v = _random_velocity(mesh, rng), _random_velocity(mesh, rng)
        p = rng.standard_normal(mesh.n_cells)
        worst = np.maximum(worst, duality_defects(mesh, u, v, p))
    names = ("duality_laplacian", "duality_grad_div", "duality_div_grad")
    return [_result(n, w <= 1e-12, w, 0.0, 1e-12) for n, w in zip(names, worst)]


def dual_flux_axiom_defects(Fbar, G):
    """Defects of the half-diamond balance, antisymmetry and boundedness for arrays of cells."""
    d1 = Fbar.shape[-1]
    scale = np.maximum(np.abs(Fbar).max(axis=-1), np.finfo(float).tiny)
    h1 = np.abs(Fbar + G.sum(axis=-1) - Fbar.sum(axis=-1, keepdims=True) / d1).max(axis=-1) / scale
    h2 = np.abs(G + np.swapaxes(G, -1, -2)).max(axis=(-1, -2))
    h3 = np.abs(G).max(axis=(-1, -2)) - np.abs(Fbar).max(axis=-1)
    return h1, h2, h3


def check_dual_flux_axioms(mesh, params, rng, n_draws: int = 100):
    """(H1)-(H3) on random states plus primal antisymmetry, on this mesh."""
    w1 = w2 = 0.0
    w3 = -np.inf
    anti = 0.0
    for _ in range(n_draws):
        rho = rng.uniform(0.2, 3.0, mesh.n_cells)
        u = _random_velocity(mesh, rng)
        flux = fluxes(mesh, params, rho, u)
        h1, h2, h3 = dual_flux_axiom_defects(flux.stabilized, flux.dual)
        w1, w2, w3 = max(w1, h1.max()), max(w2, h2.max()), max(w3, h3.max())
        inner = mesh.interior_faces
        for F in (flux.primal, flux.stabilized):
            a = F[mesh.face_cells[inner, 0], mesh.face_local[inner, 0]]
            b = F[mesh.face_cells[inner, 1], mesh.face_local[inner, 1]]
            anti = max(anti, float(np.abs(a + b).max(initial=0.0)))
        bnd = mesh.boundary_faces
        if len(bnd):
            anti = max(anti, float(np.abs(flux.primal[mesh.face_cells[bnd, 0], mesh.face_local[bnd, 0]]).max()))
    return [
        _result("dual_flux_H1", w1 <= 1e-12, w1, 0.0, 1e-12),
        _result("dual_flux_H2", w2 == 0.0, w2, 0.0, 0.0),
        _result("dual_flux_H3", w3 <= 0.0, w3, 0.0, 0.0),
        _result("primal_flux_antisymmetry", anti == 0.0, anti, 0.0, 0.0),
    ]


def check_geometry(mesh):
    area = mesh.face_measure[mesh.cell_faces]
    closure = np.linalg.norm((mesh.cell_normals * area[:, :, None]).sum(axis=1), axis=1) / area.sum(axis=1)
    inner = mesh.interior_faces
    nK = mesh.cell_normals[mesh.face_cells[inner, 0], mesh.face_local[inner, 0]]
    nL = mesh.cell_normals[mesh.face_cells[inner, 1], mesh.face_local[inner, 1]]
    negation = float(np.abs(nK + nL).max(initial=0.0))
    partition = abs(mesh.diamond_measure.sum() - mesh.volume) / mesh.volume
    return [
        _result("geometry_closure", closure.max() <= 1e-13, closure.max(), 0.0, 1e-13),
        _result("geometry_diamond_partition", partition <= 1e-13, partition, 0.0, 1e-13),
        _result("geometry_normal_negation", negation == 0.0, negation, 0.0, 0.0),
    ]


def check_affine_reproduction(mesh, rng, n_points: int = 10):
    d = mesh.dim
    G = rng.standard_normal((d, d))
    c = rng.standard_normal(d)
    u = cr_interpolate(mesh, lambda X: X @ G.T + c)
    bary = rng.dirichlet(np.ones(d + 1), size=n_points)
    X = np.einsum("qv,cvk->cqk", bary, mesh.points[mesh.cells])
    exact = X @ G.T + c
    err = float(np.abs(cr_values(mesh, u, bary) - exact).max())
    scale = max(1.0, float(np.abs(exact).max()))
    return [_result("cr_affine_reproduction", err <= 1e-13 * scale, err, 0.0, 1e-13 * scale)]


# -- aggregation ----------------------------------------------------------

def run_all(mesh, params, state, forcing=None, seed: int = 0, infsup_max_cells: int = 2048):
    """Run every check on one state; ``forcing`` is the diamond projection of f."""
    rng = np.random.default_rng(seed)
    report = DiagnosticsReport()
    report.extend(check_exponents(params, mesh.dim))
    report.extend(check_geometry(mesh))
    report.extend(check_affine_reproduction(mesh, rng))
    report.extend(check_dualities(mesh, rng))
    report.extend(check_dual_flux_axioms(mesh, params, rng, n_draws=20))
    report.extend(check_mass_conservation(mesh, params, state))
    report.extend(check_positivity(mesh, params, state))
    report.extend(check_dual_mass_balance(mesh, params, state))
    report.extend(check_energy(mesh, params, state, forcing))
    rho = np.asarray(state.rho, dtype=float)
    for b in (power_renormalizer(1.0), power_renormalizer(2.0), power_renormalizer(params.gamma),
              power_renormalizer(params.Gamma), truncation_renormalizer(float(np.median(rho)))):
        if b.name in {r.name[len("renorm_"):] for r in report.results if r.name.startswith("renorm_")}:
            continue
        report.extend(check_renormalization(mesh, params, state, b))
    report.extend(check_effective_viscous_flux(mesh, params, state))
    report.extend(check_infsup(mesh, infsup_max_cells))
    report.extend(check_fortin(mesh, GRADIENT_BUBBLE, rng))
    report.extend(check_fortin(mesh, STREAM_BUBBLE, rng))
    if mesh.n_interior:
        value, bound = conv_remainder(mesh, params, state, state.u)
        report.extend([_info("conv_remainder", "R_conv(rho, u, u) against its bound with constant 1",
                             value)])
        report.results[-1].bound = bound
    return report
