import numpy as np
import pytest

from stagns.cli import forcing_projection
from stagns.fields import SchemeParams
from stagns.mesh import BUILTIN_MESHES, refine_uniform
from stagns.solver import SolverConfig, solve


def refined(name, times):
    mesh = BUILTIN_MESHES[name]()
    for _ in range(times):
        mesh = refine_uniform(mesh)
    return mesh


def solved(mesh, forcing="stream_bubble", params=None):
    params = params or SchemeParams()
    proj, _ = forcing_projection(mesh, params, forcing)
    state, log = solve(mesh, params, SolverConfig(), proj)
    return mesh, params, state, proj, log


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def bubble_solution():
    return solved(refined("two_triangle_square", 2))


@pytest.fixture(scope="session")
def trig_solution():
    return solved(refined("criss_cross_square", 2), "stream_trig")


@pytest.fixture(scope="session")
def cube_solution():
    return solved(BUILTIN_MESHES["kuhn_cube"](), "zero")


CRITERIA = {}


@pytest.fixture
def record():
    """Store the outcome of an acceptance criterion for the end-of-run summary."""
    def _record(number, ok, detail):
        CRITERIA[number] = (bool(ok), detail)
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
