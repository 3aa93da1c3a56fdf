"""Command line entry point: ``stagns solve|study|check --config FILE``.

Exit codes: 0 success, 1 a diagnostic failed, 2 configuration or mesh
error, 3 continuation failure.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import diagnostics as diag
from .fields import SchemeParams, broken_seminorm, cell_average, cell_lp, cr_values, density_seminorm
from .forcing import PRESETS, GRADIENT_BUBBLE, STREAM_BUBBLE, STREAM_TRIG
from .io import ConfigError, RunConfig, read_config, write_csv, write_vtk
from .mesh import BUILTIN_MESHES, MeshError, load_mesh, refine_uniform
from .operators import source_projection
from .quadrature import simplex_rule
from .solver import (
    ContinuationError,
    DiscreteState,
    LinearSolverError,
    SolverConfig,
    inject_state,
    solve,
)

log = logging.getLogger("stagns")

EXIT_OK, EXIT_DIAGNOSTIC, EXIT_CONFIG, EXIT_CONTINUATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


def build_mesh(cfg: RunConfig):
    if not cfg.mesh:
        raise ConfigError("no mesh given")
    if cfg.mesh.startswith("builtin:"):
        name = cfg.mesh[len("builtin:"):]
        if name not in BUILTIN_MESHES:
            raise ConfigError(f"unknown built-in mesh {name!r}")
        mesh = BUILTIN_MESHES[name]()
    else:
        mesh = load_mesh(cfg.base_dir / cfg.mesh, cfg.mesh_format)
    for _ in range(cfg.refine):
        mesh = refine_uniform(mesh)
    return mesh


def forcing_projection(mesh, params: SchemeParams, name: str, base_dir=Path(".")):
    """Diamond projection of the forcing and the manufactured field (or None)."""
    if name == "zero":
        return np.zeros((mesh.n_faces, mesh.dim)), None
    if name.startswith("file:"):
        data = np.loadtxt(Path(base_dir) / name[5:], ndmin=2)
        if data.shape != (mesh.n_faces, mesh.dim):
            raise ConfigError(f"forcing file must hold {mesh.n_faces} rows of {mesh.dim} values")
        data[mesh.boundary_faces] = 0.0
        return data, None
    preset = PRESETS[name]
    proj = source_projection(mesh, lambda X: preset.forcing(X, params), preset.degree)
    return proj, preset


def velocity_error(mesh, u, preset, degree: int = 8) -> float:
    """L2 distance between the piecewise affine velocity and the reference field."""
    bary, w = simplex_rule(mesh.dim, degree)
    uh = cr_values(mesh, u, bary)
    if preset is None:
        diff = uh
    else:
        X = np.einsum("qv,cvk->cqk", bary, mesh.points[mesh.cells])
        diff = uh - preset.velocity(X.reshape(-1, mesh.dim)).reshape(uh.shape)
    return float(np.sqrt((mesh.cell_measure * ((diff ** 2).sum(axis=-1) @ w)).sum()))


def write_outputs(cfg: RunConfig, mesh, params, state, report, summary_header, summary_row):
    if cfg.vtk:
        write_vtk(cfg.vtk, mesh,
                  {"rho": state.rho,
                   "effective_viscous_flux": diag.effective_viscous_flux(mesh, params, state)},
                  {"velocity": cell_average(mesh, state.u)})
    if cfg.csv:
        write_csv(cfg.csv, summary_header, [summary_row])
    if cfg.report and report is not None:
        Path(cfg.report).write_text(report.to_csv())


def _exponent_gate(params, dim, force):
    failed = [r for r in diag.check_exponents(params, dim) if r.status == "fail"]
    if failed and not force:
        msgs = "; ".join(f"{r.note} violated ({r.name}: value {r.value:g}, bound {r.bound:g})"
                         for r in failed)
        raise ConfigError(f"exponent conditions fail: {msgs} (use --force to override)")


SUMMARY_HEADER = ["cells", "h", "converged", "newton_iterations", "residual", "min_rho", "max_rho",
                  "mass_error", "u_norm", "diagnostics_passed"]


def _summary(mesh, params, state, history, converged, report):
    mass = float((mesh.cell_measure * state.rho).sum())
    its = sum(s.iterations for s in history.steps) if history else 0
    res = history.steps[-1].residual if history and history.steps else float("nan")
    return [mesh.n_cells, mesh.mesh_size, int(converged), its, float(res),
            float(np.min(state.rho)), float(np.max(state.rho)),
            abs(mass - params.rho_star * mesh.volume) / (params.rho_star * mesh.volume),
            broken_seminorm(mesh, state.u), int(report.passed) if report else 0]


def cmd_solve(cfg: RunConfig, force: bool = False) -> int:
    try:
        mesh = build_mesh(cfg)
        _exponent_gate(cfg.params, mesh.dim, force)
        proj, _ = forcing_projection(mesh, cfg.params, cfg.forcing, cfg.base_dir)
    except (ConfigError, MeshError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        state, history = solve(mesh, cfg.params, cfg.solver, proj)
    except (ContinuationError, LinearSolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        partial = getattr(exc, "state", None)
        if partial is not None:
            write_outputs(cfg, mesh, cfg.params, partial, None, SUMMARY_HEADER,
                          _summary(mesh, cfg.params, partial, exc.log, False, None))
        return EXIT_CONTINUATION
    report = diag.run_all(mesh, cfg.params, state, proj, seed=cfg.seed)
    write_outputs(cfg, mesh, cfg.params, state, report, SUMMARY_HEADER,
                  _summary(mesh, cfg.params, state, history, True, report))
    for r in report.failures():
        print(f"diagnostic failed: {r.name} value={r.value!r} bound={r.bound!r}", file=sys.stderr)
    print(f"solved on {mesh.n_cells} cells: min rho {np.min(state.rho):.6g}, "
          f"diagnostics {'passed' if report.passed else 'FAILED'}")
    return EXIT_OK if report.passed else EXIT_DIAGNOSTIC


# -- refinement study -----------------------------------------------------

STUDY_HEADER = ["level", "cells", "h", "u_norm", "rho_norm", "artificial_pressure_norm",
                "density_diffusion", "min_rho", "mass_error", "energy_lhs", "energy_rhs",
                "err_u", "err_rho"]
BOUNDED_COLUMNS = ("u_norm", "rho_norm", "artificial_pressure_norm", "density_diffusion")


@dataclass
class StudyResult:
    rows: list
    bounded: bool
    errors_decrease: bool

    @property
    def passed(self) -> bool:
        return self.bounded and self.errors_decrease

    def column(self, name):
        k = STUDY_HEADER.index(name)
        return [row[k] for row in self.rows]


def study_row(level, mesh, params, state, proj, preset):
    h = mesh.mesh_size
    eta = params.eta
    q = (1.0 + eta) / eta
    e = diag.energy_terms(mesh, params, state, proj)
    mass = float((mesh.cell_measure * state.rho).sum())
    return [level, mesh.n_cells, h,
            broken_seminorm(mesh, state.u),
            cell_lp(mesh, state.rho, 3.0 * (params.gamma - 1.0)),
            cell_lp(mesh, h ** params.xi3 * state.rho ** params.Gamma, 1.0 + eta),
            h ** params.xi2 * density_seminorm(mesh, state.rho, q) ** q,
            float(np.min(state.rho)),
            abs(mass - params.rho_star * mesh.volume) / (params.rho_star * mesh.volume),
            e["lhs"], e["work"] + e["correction"],
            velocity_error(mesh, state.u, preset),
            cell_lp(mesh, np.asarray(state.rho) - params.rho_star)]


def study_flags(rows, slack: float = 0.10, ratio: float = 1.3, exact: float = 1e-14):
    idx = {name: STUDY_HEADER.index(name) for name in STUDY_HEADER}
    bounded = all(rows[k + 1][idx[c]] <= (1.0 + slack) * rows[k][idx[c]]
                  for c in BOUNDED_COLUMNS for k in range(len(rows) - 1))
    decrease = True
    for c in ("err_u", "err_rho"):
        for k in range(len(rows) - 1):
            a, b = rows[k][idx[c]], rows[k + 1][idx[c]]
            if a <= exact and b <= exact:
                continue
            decrease &= b * ratio <= a
    return bounded, decrease


def refinement_study(mesh, params: SchemeParams, solver_cfg: SolverConfig, forcing: str,
                     levels: int, base_dir=Path(".")) -> StudyResult:
    """Solve on ``levels`` uniform refinements, seeding each level by injection."""
    if levels < 3:
        raise ConfigError("study requires >=3 levels")
    if forcing.startswith("file:"):
        raise ConfigError("a refinement study needs an analytic forcing")
    rows = []
    state = None
    previous = None
    for level in range(levels):
        if level:
            mesh = refine_uniform(previous)
        proj, preset = forcing_projection(mesh, params, forcing, base_dir)
        initial = inject_state(previous, mesh, state) if state is not None else None
        state, _ = solve(mesh, params, solver_cfg, proj, initial=initial)
        rows.append(study_row(level, mesh, params, state, proj, preset))
        log.info("study level %d: %d cells", level, mesh.n_cells)
        previous = mesh
    bounded, decrease = study_flags(rows)
    return StudyResult(rows, bounded, decrease)


def cmd_study(cfg: RunConfig, force: bool = False) -> int:
    try:
        mesh = build_mesh(cfg)
        _exponent_gate(cfg.params, mesh.dim, force)
        if cfg.levels < 3:
            raise ConfigError("study requires >=3 levels")
    except (ConfigError, MeshError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = refinement_study(mesh, cfg.params, cfg.solver, cfg.forcing, cfg.levels, cfg.base_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ContinuationError, LinearSolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTINUATION
    if cfg.csv:
        write_csv(cfg.csv, STUDY_HEADER, result.rows)
    for row in result.rows:
        print(" ".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row))
    print(f"uniform bounds: {'pass' if result.bounded else 'FAIL'}; "
          f"error decrease: {'pass' if result.errors_decrease else 'FAIL'}")
    return EXIT_OK if result.passed else EXIT_DIAGNOSTIC


# -- property battery -----------------------------------------------------

def check_battery(seed: int = 0, extra_mesh=None):
    """Invariant checks on the built-in meshes plus two small converged solves."""
    rng = np.random.default_rng(seed)
    params = SchemeParams()
    report = diag.DiagnosticsReport()
    meshes = {
        "two_triangle_square": BUILTIN_MESHES["two_triangle_square"](),
        "criss_cross_square": refine_uniform(BUILTIN_MESHES["criss_cross_square"]()),
        "two_tetrahedra": BUILTIN_MESHES["two_tetrahedra"](),
        "kuhn_cube": BUILTIN_MESHES["kuhn_cube"](),
    }
    if extra_mesh is not None:
        meshes["config_mesh"] = extra_mesh

    def prefixed(label, results):
        for r in results:
            r.name = f"{label}:{r.name}"
        return results

    for label, mesh in meshes.items():
        report.extend(prefixed(label, diag.check_geometry(mesh)))
        report.extend(prefixed(label, diag.check_affine_reproduction(mesh, rng)))
        report.extend(prefixed(label, diag.check_dualities(mesh, rng)))
        report.extend(prefixed(label, diag.check_dual_flux_axioms(mesh, params, rng)))
        for field in (GRADIENT_BUBBLE, STREAM_BUBBLE, STREAM_TRIG):
            report.extend(prefixed(label, diag.check_fortin(mesh, field, rng)))
        if mesh.n_interior and mesh.n_cells <= 2048:
            report.extend(prefixed(label, diag.check_infsup(mesh)))

    cases = [("solve_bubble_2d", refine_uniform(refine_uniform(meshes["two_triangle_square"])),
              "stream_bubble"),
             ("solve_zero_3d", meshes["kuhn_cube"], "zero")]
    for label, mesh, forcing in cases:
        proj, _ = forcing_projection(mesh, params, forcing)
        state, _ = solve(mesh, params, SolverConfig(), proj)
        report.extend(prefixed(label, diag.run_all(mesh, params, state, proj,
                                                   seed=int(rng.integers(2 ** 31))).results))
    return report


def cmd_check(cfg: RunConfig | None, seed: int | None = None) -> int:
    cfg = cfg or RunConfig()
    seed = cfg.seed if seed is None else seed
    try:
        extra = build_mesh(cfg) if cfg.mesh else None
    except (ConfigError, MeshError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    report = check_battery(seed, extra)
    if cfg.report:
        Path(cfg.report).write_text(report.to_csv())
    for r in report.failures():
        print(f"check failed: {r.name} value={r.value!r} bound={r.bound!r} tol={r.tol!r}",
              file=sys.stderr)
    n_pass = sum(r.status == "pass" for r in report.results)
    print(f"{n_pass} passed, {len(report.failures())} failed, "
          f"{sum(r.status == 'info' for r in report.results)} info")
    return EXIT_OK if report.passed else EXIT_DIAGNOSTIC


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="stagns", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=["solve", "study", "check"])
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--force", action="store_true", help="run even if exponent conditions fail")
    parser.add_argument("--seed", type=int, default=None, help="seed for randomized checks")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = read_config(args.config) if args.config else None
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and cfg is not None:
        cfg.seed = args.seed
    if args.command == "check":
        return cmd_check(cfg, args.seed)
    if cfg is None:
        print(f"error: {args.command} requires --config", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "solve":
        return cmd_solve(cfg, args.force)
    return cmd_study(cfg, args.force)


if __name__ == "__main__":
    sys.exit(main())
