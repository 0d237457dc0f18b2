import numpy as np
import pytest
import scipy.sparse as sp

from thinhomog.fem import (
    ConvergenceError, DiffusionTensor, Field, ReducedSystem,
    apply_dirichlet, apply_periodic, assemble_boundary_load, assemble_mass,
    assemble_stiffness, energy, gradient_norms, integrate, l2_error, l2_norm, solve_cg)
from thinhomog.geometry import constant_graph
from thinhomog.mesh import BOTTOM, LEFT, RIGHT, TOP, mesh_graph_domain


def unit_square(n: int):
    return mesh_graph_domain(constant_graph(0.), constant_graph(1.), (0., 1.), n, n)


def manufactured_error(n: int) -> float:
    """-Laplace u = 2 pi^2 u, u = sin(pi x1) sin(pi x2), homogeneous Dirichlet.
    """
    mesh = unit_square(n)
    exact = lambda x1, x2: np.sin(np.pi * x1) * np.sin(np.pi * x2)
    stiff = assemble_stiffness(mesh, DiffusionTensor())
    rhs = assemble_mass(mesh) @ (2 * np.pi ** 2 * exact(mesh.nodes[:, 0], mesh.nodes[:, 1]))
    boundary = np.unique(np.concatenate([mesh.nodes_on(t) for t in (BOTTOM, TOP, LEFT, RIGHT)]))
    system = apply_dirichlet((stiff, rhs), boundary, 0.)
    reduced, report = solve_cg(system.matrix, system.rhs, tol=1e-12)
    assert report.converged
    return l2_error(mesh, system.expand(reduced), exact)


def test_manufactured_rate():
    errors = [manufactured_error(n) for n in (16, 32, 64)]
    rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(rates >= 1.9), rates


def test_mass_and_integrals():
    mesh = mesh_graph_domain(constant_graph(-0.5), constant_graph(1.), (0., 2.), 6, 5)
    mass = assemble_mass(mesh)
    ones = np.ones(mesh.n_nodes)
    assert ones @ mass @ ones == pytest.approx(3.)
    assert integrate(mesh, ones) == pytest.approx(3.)
    # linear functions are exact
    x1 = mesh.nodes[:, 0]
    assert integrate(mesh, x1) == pytest.approx(3.)
    assert l2_norm(mesh, x1) ** 2 == pytest.approx(1.5 * 8. / 3.)
    d1, d2 = gradient_norms(mesh, x1)
    assert d1 == pytest.approx(np.sqrt(3.))
    assert d2 == pytest.approx(0., abs=1e-12)
    assert energy(mesh, 2 * x1, DiffusionTensor(0.5, 4.)) == pytest.approx(0.5 * 4. * 3.)


def test_boundary_load():
    mesh = unit_square(8)
    load = assemble_boundary_load(mesh, TOP, lambda pts: pts[:, 0])
    # int_0^1 x dx
    assert load.sum() == pytest.approx(0.5)
    assert np.all(load[mesh.nodes_on(BOTTOM)] == 0.)


def test_diffusion_tensor():
    tensor = DiffusionTensor.thin(0.1)
    assert tensor.a22 == pytest.approx(100.)
    with pytest.raises(ValueError):
        DiffusionTensor(1., 0.)


def test_field():
    assert len(Field(np.zeros(3))) == 3
    with pytest.raises(AssertionError):
        Field(np.array([0., np.nan]))


def test_dirichlet_compose():
    matrix = sp.diags([-np.ones(4), 2 * np.ones(5), -np.ones(4)], [-1, 0, 1], format='csr')
    system = apply_dirichlet((matrix, np.zeros(5)), [0, 4], [1., 3.])
    reduced, _ = solve_cg(system.matrix, system.rhs)
    # discrete harmonic, linear interpolation between the ends
    np.testing.assert_allclose(system.expand(reduced), [1., 1.5, 2., 2.5, 3.], atol=1e-9)

    ident = ReducedSystem.identity(matrix, np.ones(5))
    np.testing.assert_allclose(ident.expand(np.arange(5.)), np.arange(5.))


def test_periodic_pairs():
    # 1D periodic Laplacian + mass on 4 cells, nodes 0 and 4 identified
    n = 5
    matrix = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]).tolil()
    matrix[0, 0] = matrix[n - 1, n - 1] = 1.
    matrix = matrix.tocsr() + sp.identity(n)
    system = apply_periodic((matrix, np.ones(n)), np.array([[0, 4]]))
    assert system.matrix.shape == (4, 4)
    reduced, _ = solve_cg(system.matrix, system.rhs)
    full = system.expand(reduced)
    assert full[0] == full[4]
    np.testing.assert_allclose(full, 1., atol=1e-9)

    with pytest.raises(ValueError):
        apply_periodic((matrix, np.ones(n)), np.array([[0, 4], [1, 4]]))
    with pytest.raises(ValueError):
        apply_periodic((matrix, np.ones(n)), np.array([[0, 4], [4, 3]]))


def test_cg_report():
    mesh = unit_square(8)
    matrix = assemble_stiffness(mesh, DiffusionTensor()) + assemble_mass(mesh)
    rhs = assemble_mass(mesh) @ np.cos(np.pi * mesh.nodes[:, 0])
    x, report = solve_cg(matrix, rhs, tol=1e-10)
    assert report.converged
    assert report.residual <= 1e-10
    assert report.history[0] == 1.
    assert report.history[-1] < report.history[0]
    assert np.linalg.norm(matrix @ x - rhs) <= 1e-9 * np.linalg.norm(rhs)

    # zero load
    x, report = solve_cg(matrix, np.zeros(mesh.n_nodes))
    assert report.iterations == 0 and not np.any(x)

    with pytest.raises(ConvergenceError) as info:
        solve_cg(matrix, rhs, tol=1e-14, max_iter=2)
    assert len(info.value.history) == 3


def test_cg_initial_guess():
    mesh = unit_square(8)
    matrix = assemble_stiffness(mesh, DiffusionTensor()) + assemble_mass(mesh)
    rhs = assemble_mass(mesh) @ np.cos(np.pi * mesh.nodes[:, 0])
    x, _ = solve_cg(matrix, rhs, tol=1e-10)
    # exact guess, no iteration
    y, report = solve_cg(matrix, rhs, tol=1e-8, x0=x)
    assert report.iterations == 0
    np.testing.assert_array_equal(x, y)
    # nearby guess
    z, warm = solve_cg(matrix, rhs, tol=1e-10, x0=x + 1e-3)
    assert warm.converged and warm.history[0] < 1.
    assert np.linalg.norm(matrix @ z - rhs) <= 1e-9 * np.linalg.norm(rhs)


def test_cg_pinned():
    mesh = unit_square(8)
    stiff = assemble_stiffness(mesh, DiffusionTensor())
    rhs = assemble_mass(mesh) @ np.cos(np.pi * mesh.nodes[:, 0])
    rhs -= rhs.mean()
    x, report = solve_cg(stiff, rhs, pin=0)
    assert x[0] == 0.
    assert report.converged
    np.testing.assert_allclose(stiff @ x, rhs, atol=1e-8)

    with pytest.raises(AssertionError):
        solve_cg(stiff, rhs + 1., pin=0)
