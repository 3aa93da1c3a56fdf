import numpy as np
import pytest

from stagns.fields import SchemeParams, barycentric_coordinates, broken_divergence, cr_interpolate, zero_boundary
from stagns.mesh import BUILTIN_MESHES, refine_uniform
from stagns.operators import (
    broken_calculus,
    cell_topology,
    diffusion,
    divergence_matrix,
    face_field,
    face_mean_gradient,
    fluxes,
    interior_vector,
    mass_residual,
    momentum_convection,
    pressure_gradient,
    primal_fluxes,
    solve_dual_fluxes,
    source_projection,
    stabilizer_function,
    viscous_matrices,
)
from stagns.diagnostics import dual_flux_axiom_defects
from stagns.quadrature import simplex_rule
from conftest import refined


@pytest.fixture
def diagonal():
    m = BUILTIN_MESHES["two_triangle_square"]()
    f = m.interior_faces[0]
    u = np.zeros((m.n_faces, 2))
    u[f] = [1.0, 0.0]
    return m, f, np.array([1.0, 2.0]), u


def local_index(m, K, f):
    return int(np.flatnonzero(m.cell_faces[K] == f)[0])


def test_primal_flux_examples(diagonal):
    m, f, rho, u = diagonal
    params = SchemeParams()
    flux = primal_fluxes(m, params, rho, u)
    assert flux.primal[0, local_index(m, 0, f)] == pytest.approx(-2.0)
    assert flux.primal[1, local_index(m, 1, f)] == pytest.approx(2.0)
    zero = primal_fluxes(m, params, np.full(2, 1.3), np.zeros_like(u))
    assert np.all(zero.primal == 0) and np.all(zero.stabilized == 0)
    stab = primal_fluxes(m, SchemeParams(gamma=3.0, Gamma=20.0, xi2=2.0), rho, u, h=1.0)
    assert stab.stabilized[0, local_index(m, 0, f)] == pytest.approx(-8.0)
    assert np.all(stab.primal[:, [i for i in range(3)]][m.is_boundary_face[m.cell_faces]] == 0)


def test_stabilizer_variants():
    x = np.array([-2.0, 0.0, 3.0])
    p = SchemeParams(gamma=3.0, Gamma=20.0)
    assert np.allclose(stabilizer_function(p, x), [-2.0, 0.0, 3.0])
    p = SchemeParams()
    assert np.allclose(stabilizer_function(p, x), np.sign(x) * np.abs(x) ** 2)
    assert np.allclose(stabilizer_function(p.replace(stabilizer="linear"), x), x)


def test_dual_flux_examples():
    G = solve_dual_fluxes(np.array([[1.0, -1.0, 0.0]]))[0]
    B, pairs = cell_topology(2)
    g = np.array([G[i, j] for i, j in pairs])
    ref = np.linalg.lstsq(B, np.full(3, 0.0) - np.array([1.0, -1.0, 0.0]), rcond=None)[0]
    assert np.allclose(g, ref, atol=1e-15)
    assert np.allclose(G, -G.T)
    h1, h2, h3 = dual_flux_axiom_defects(np.array([[1.0, -1.0, 0.0]]), G[None])
    assert h1 <= 1e-13 and h2 == 0 and h3 <= 0
    assert np.all(solve_dual_fluxes(np.zeros((4, 4))) == 0)


def test_dual_flux_axioms_random_two_triangle(rng):
    m = BUILTIN_MESHES["two_triangle_square"]()
    for _ in range(1000):
        flux = fluxes(m, SchemeParams(), rng.exponential(size=2), zero_boundary(m, rng.standard_normal((5, 2))))
        h1, h2, h3 = dual_flux_axiom_defects(flux.stabilized, flux.dual)
        assert np.all(h1 <= 1e-12) and np.all(h2 == 0) and np.all(h3 <= 0)


def test_mass_residual_examples(rng):
    m = refined("criss_cross_square", 1)
    params = SchemeParams()
    u = zero_boundary(m, rng.standard_normal((m.n_faces, 2)))
    assert np.all(mass_residual(m, params, np.ones(m.n_cells), np.zeros_like(u)) == 0)
    c = 1.7
    expected = c * broken_divergence(m, u) + m.mesh_size ** params.xi1 * (c - 1.0)
    assert np.allclose(mass_residual(m, params, np.full(m.n_cells, c), u), expected, atol=1e-12)
    rho = rng.exponential(size=m.n_cells)
    total = (m.cell_measure * mass_residual(m, params, rho, u)).sum()
    relax = m.mesh_size ** params.xi1 * (m.cell_measure * (rho - 1.0)).sum()
    assert total == pytest.approx(relax, abs=1e-12)


def test_convection_kinetic_identity(rng):
    for name in ("two_triangle_square", "two_tetrahedra"):
        m = refined(name, 1)
        u = zero_boundary(m, rng.standard_normal((m.n_faces, m.dim)))
        flux = fluxes(m, SchemeParams(), rng.exponential(size=m.n_cells), u)
        conv = momentum_convection(m, flux, u)
        lhs = (m.diamond_measure * np.einsum("fi,fi->f", conv, u)).sum()
        per_face = np.bincount(m.cell_faces.ravel(), weights=flux.dual.sum(axis=2).ravel(),
                               minlength=m.n_faces)
        rhs = 0.5 * (per_face * (u ** 2).sum(axis=1)).sum()
        assert lhs == pytest.approx(rhs, abs=1e-12)
        assert np.all(momentum_convection(m, flux, np.zeros_like(u)) == 0)
        flux.dual[:] = 0.0
        assert np.all(momentum_convection(m, flux, u) == 0)


def test_diffusion_examples(rng):
    m = refined("criss_cross_square", 1)
    A = rng.standard_normal((2, 2))
    u = cr_interpolate(m, lambda X: X @ A.T + 1.0)
    lap, _ = diffusion(m, u)
    assert np.abs(lap[m.interior_faces]).max() < 1e-12
    tri = BUILTIN_MESHES["unit_triangle"]()
    hyp = int(np.argmax(tri.face_measure))
    zeta = np.zeros((3, 2))
    zeta[hyp, 0] = 1.0
    lap, _ = diffusion(tri, zeta, boundary_rows=True)
    assert lap[hyp, 0] == pytest.approx(24.0)


def test_pressure_gradient_example(diagonal):
    m, f, rho, _ = diagonal
    assert np.allclose(pressure_gradient(m, rho, 2.0)[f], [-9.0, 9.0])
    assert np.all(pressure_gradient(m, np.full(2, 3.0), 2.0) == 0)
    with pytest.raises(ValueError, match="positive cone"):
        pressure_gradient(m, np.array([1.0, -1.0]), 1.5)


def test_broken_calculus_affine(rng):
    m = refined("kuhn_cube", 1)
    A = rng.standard_normal((3, 3))
    G, div, curl = broken_calculus(m, cr_interpolate(m, lambda X: X @ A.T))
    assert np.allclose(G, A, atol=1e-12) and np.allclose(div, np.trace(A), atol=1e-12)
    assert np.allclose(curl, [A[2, 1] - A[1, 2], A[0, 2] - A[2, 0], A[1, 0] - A[0, 1]], atol=1e-12)


def test_curl_div_cell_identity(rng):
    """int_K grad u:grad v = int_K div u div v + curl u curl v + boundary flux terms."""
    m = refined("criss_cross_square", 1)
    bary, w = simplex_rule(1, 2)
    for _ in range(20):
        u = rng.standard_normal((m.n_faces, 2))
        v = rng.standard_normal((m.n_faces, 2))
        Gu, du, cu = broken_calculus(m, u)
        Gv, dv, cv = broken_calculus(m, v)
        K = int(rng.integers(m.n_cells))
        # boundary term: int_{dK} (grad u v) . n - div u (v . n), exact face quadrature
        bnd = 0.0
        for i, f in enumerate(m.cell_faces[K]):
            n = m.cell_normals[K, i]
            pts = bary @ m.points[m.faces[f]]
            lam = np.array([barycentric_coordinates(m, K, x) for x in pts])
            vk = (1 - 2 * lam) @ v[m.cell_faces[K]]
            integrand = (vk @ Gu[K].T) @ n - du[K] * (vk @ n)
            bnd += m.face_measure[f] * (w @ integrand)
        lhs = m.cell_measure[K] * np.sum(Gu[K] * Gv[K])
        rhs = m.cell_measure[K] * (du[K] * dv[K] + cu[K] * cv[K]) + bnd
        assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(lhs)))


def test_source_projection_examples():
    m = BUILTIN_MESHES["two_triangle_square"]()
    f = m.interior_faces[0]
    c = np.array([2.0, -1.0])
    assert np.allclose(source_projection(m, lambda X: np.tile(c, (len(X), 1)))[f], c)
    # centroid of the diagonal diamond: the two cones with apex at cell centroids
    cone_k = (m.points[0] + m.points[2] + m.cell_centroid[0]) / 3
    cone_l = (m.points[0] + m.points[2] + m.cell_centroid[1]) / 3
    centroid = 0.5 * (cone_k + cone_l)
    assert np.abs(source_projection(m, lambda X: X.copy())[f] - centroid).max() < 1e-13


def test_source_projection_bounded(rng):
    f = lambda X: np.column_stack([np.sin(3 * X[:, 0]), np.exp(X[:, 1])])
    ratios = []
    bary, w = simplex_rule(2, 8)
    for k in range(1, 5):
        m = refined("criss_cross_square", k)
        P = source_projection(m, f, 4)
        X = np.einsum("qv,cvk->cqk", bary, m.points[m.cells]).reshape(-1, 2)
        fl2 = np.sqrt((m.cell_measure * ((f(X) ** 2).sum(1).reshape(m.n_cells, -1) @ w)).sum())
        lhs = np.sqrt((m.diamond_measure[m.interior_faces] * (P[m.interior_faces] ** 2).sum(1)).sum())
        ratios.append(lhs / fl2)
    assert max(ratios) <= 1.0 + 1e-12


def test_face_mean_gradient(rng):
    m = refined("two_tetrahedra", 1)
    a = rng.standard_normal(3)
    g = face_mean_gradient(m, lambda X: X @ a + 2.0)
    assert np.allclose(g, a, atol=1e-12)
    assert np.allclose(face_mean_gradient(m, lambda X: np.full(len(X), 5.0)), 0, atol=1e-12)
    phi = lambda X: np.cos(np.pi * X[:, 0]) * np.cos(np.pi * X[:, 1])
    grad = lambda X: -np.pi * np.column_stack([np.sin(np.pi * X[:, 0]) * np.cos(np.pi * X[:, 1]),
                                               np.cos(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1])])
    bary, w = simplex_rule(2, 6)
    errs = []
    for k in range(2, 6):
        m = refined("criss_cross_square", k)
        gh = face_mean_gradient(m, phi)
        X = np.einsum("qv,cvk->cqk", bary, m.points[m.cells])
        diff = grad(X.reshape(-1, 2)).reshape(m.n_cells, -1, 2) - gh[:, None, :]
        errs.append(np.sqrt((m.cell_measure * ((diff ** 2).sum(-1) @ w)).sum()))
    ratios = np.array(errs[1:]) / np.array(errs[:-1])
    assert np.all(np.abs(ratios - 0.5) <= 0.05)


@pytest.mark.parametrize("name", ["criss_cross_square", "two_tetrahedra"])
def test_matrices_match_operators(name, rng):
    m = refined(name, 1)
    A_lap, A_div = viscous_matrices(m)
    assert abs(A_lap - A_lap.T).max() <= 1e-13 and abs(A_div - A_div.T).max() <= 1e-13
    u = zero_boundary(m, rng.standard_normal((m.n_faces, m.dim)))
    lap, gdiv = diffusion(m, u)
    x = interior_vector(m, u)
    D = np.repeat(m.diamond_measure[m.interior_faces], m.dim)
    assert np.allclose(A_lap @ x / D, interior_vector(m, lap), atol=1e-11)
    assert np.allclose(A_div @ x / D, interior_vector(m, gdiv), atol=1e-11)
    B = divergence_matrix(m)
    assert np.allclose(B @ x, m.cell_measure * broken_divergence(m, u), atol=1e-12)
    assert np.array_equal(face_field(m, x), u)
