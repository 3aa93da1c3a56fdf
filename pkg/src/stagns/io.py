"""Flat configuration files, CSV tables and legacy VTK output."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .fields import SchemeParams
from .solver import SolverConfig


class ConfigError(ValueError):
    pass


PARAM_KEYS = {"mu": "mu", "lambda": "lam", "a": "a", "gamma": "gamma", "Gamma": "Gamma",
              "rho_star": "rho_star", "xi1": "xi1", "xi2": "xi2", "xi3": "xi3",
              "stabilizer": "stabilizer"}
SOLVER_KEYS = {f.name for f in fields(SolverConfig)}
RUN_KEYS = {"mesh", "mesh_format", "refine", "forcing", "csv", "vtk", "report", "levels", "seed"}


@dataclass
class RunConfig:
    mesh: str = ""
    mesh_format: str | None = None
    refine: int = 0
    params: SchemeParams = field(default_factory=SchemeParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    forcing: str = "zero"
    csv: Path | None = None
    vtk: Path | None = None
    report: Path | None = None
    levels: int = 3
    seed: int = 0
    base_dir: Path = Path(".")


def _convert(value: str, like):
    if isinstance(like, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def parse_config_text(text: str, base_dir=".") -> RunConfig:
    """Parse ``key = value`` lines; '#' starts a comment."""
    base_dir = Path(base_dir)
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in PARAM_KEYS and key not in SOLVER_KEYS and key not in RUN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value

    cfg = RunConfig(base_dir=base_dir)
    defaults_p, defaults_s = SchemeParams(), SolverConfig()
    try:
        pvals = {attr: _convert(raw[k], getattr(defaults_p, attr))
                 for k, attr in PARAM_KEYS.items() if k in raw}
        svals = {k: _convert(raw[k], getattr(defaults_s, k)) for k in SOLVER_KEYS if k in raw}
        cfg.params = SchemeParams(**pvals)
        cfg.solver = SolverConfig(**svals)
        cfg.refine = int(raw.get("refine", 0))
        cfg.levels = int(raw.get("levels", 3))
        cfg.seed = int(raw.get("seed", 0))
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.refine < 0:
        raise ConfigError("refine must be non-negative")
    cfg.mesh = raw.get("mesh", "")
    cfg.mesh_format = raw.get("mesh_format")
    cfg.forcing = raw.get("forcing", "zero")
    for key in ("csv", "vtk", "report"):
        if key in raw:
            setattr(cfg, key, base_dir / raw[key])
    if cfg.mesh and not cfg.mesh.startswith("builtin:") and not (base_dir / cfg.mesh).exists():
        raise ConfigError(f"mesh file {cfg.mesh!r} not found")
    if cfg.forcing.startswith("file:"):
        if not (base_dir / cfg.forcing[5:]).exists():
            raise ConfigError(f"forcing file {cfg.forcing[5:]!r} not found")
    elif cfg.forcing not in ("zero", "stream_bubble", "stream_trig"):
        raise ConfigError(f"unknown forcing {cfg.forcing!r}")
    return cfg


def read_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    return parse_config_text(path.read_text(), path.parent)


def _fmt(x) -> str:
    return repr(float(x))


def write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    Path(path).write_text(buf.getvalue())


def vtk_text(mesh, cell_scalars: dict, cell_vectors: dict, title: str = "stagns") -> str:
    """Legacy ASCII VTK unstructured grid with cell data."""
    d = mesh.dim
    pts = np.zeros((len(mesh.points), 3))
    pts[:, :d] = mesh.points
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {len(pts)} double"]
    out += [" ".join(_fmt(x) for x in p) for p in pts]
    nc = mesh.n_cells
    out.append(f"CELLS {nc} {nc * (d + 2)}")
    out += [f"{d + 1} " + " ".join(str(int(i)) for i in c) for c in mesh.cells]
    out.append(f"CELL_TYPES {nc}")
    out += ["5" if d == 2 else "10"] * nc
    out.append(f"CELL_DATA {nc}")
    for name, values in cell_scalars.items():
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [_fmt(v) for v in values]
    for name, values in cell_vectors.items():
        vec = np.zeros((nc, 3))
        vec[:, :d] = values
        out.append(f"VECTORS {name} double")
        out += [" ".join(_fmt(x) for x in v) for v in vec]
    return "\n".join(out) + "\n"


def write_vtk(path, mesh, cell_scalars: dict, cell_vectors: dict) -> None:
    Path(path).write_text(vtk_text(mesh, cell_scalars, cell_vectors))
