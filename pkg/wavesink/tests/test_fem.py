import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import norm as sparse_norm

from app.core.errors import ConfigError
from app.services.fem import (DIRICHLET_ON_INCLUSION, NEUMANN_ALL, assemble, assemble_blocks, boundary_flux,
                              dirichlet_on, edge_rule, edge_shape, inclusion_l2_norm, load_vector, mass_matrix,
                              p2_shape, port_projection, recover_flux, solve, stiffness_matrix)
from app.services.geometry import INTERFACE, TRUNCATION, WALL
from app.services.mesh import triangulate
from app.services.modes import compute_mode_basis


@pytest.fixture
def straight_mesh(straight_geometry):
    return triangulate(straight_geometry, 0.1)


@pytest.fixture
def disk_mesh(disk_geometry):
    return triangulate(disk_geometry, 0.1)


def test_shape_functions():
    xi = np.array([0.1, 0.3, 0.25])
    eta = np.array([0.2, 0.6, 0.25])
    n, dn = p2_shape(xi, eta)
    np.testing.assert_allclose(n.sum(axis=-1), 1.0, atol=1e-15)
    np.testing.assert_allclose(dn.sum(axis=1), 0.0, atol=1e-14)
    nodes = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]])
    n, _ = p2_shape(nodes[:, 0], nodes[:, 1])
    np.testing.assert_allclose(n, np.eye(6), atol=1e-15)


def test_edge_rule_and_shapes():
    t, w = edge_rule(6)
    assert w.sum() == pytest.approx(1.0)
    assert np.dot(w, t ** 9) == pytest.approx(0.1)
    n, dn = edge_shape(np.array([0.0, 0.5, 1.0]))
    np.testing.assert_allclose(n, np.eye(3), atol=1e-15)
    np.testing.assert_allclose(dn.sum(axis=1), 0.0, atol=1e-15)


def test_mass_and_stiffness_reproduce_quadratics(straight_mesh):
    coords = straight_mesh.dof_coordinates
    ones = np.ones(straight_mesh.n_dofs)
    mass = mass_matrix(straight_mesh)
    stiffness = stiffness_matrix(straight_mesh)
    assert ones @ mass @ ones == pytest.approx(2.0, rel=1e-12)
    np.testing.assert_allclose(stiffness @ ones, 0.0, atol=1e-10)
    u = coords[:, 0] ** 2
    assert u @ stiffness @ u == pytest.approx(4.0 * 8.0 / 3.0, rel=1e-10)


def test_curved_inclusion_area(disk_mesh):
    ones = np.ones(disk_mesh.n_dofs)
    area = ones @ mass_matrix(disk_mesh, disk_mesh.region_mask("inclusion")) @ ones
    assert area == pytest.approx(np.pi * 0.09, rel=1e-4)


def test_port_projection_of_constants(straight_mesh, straight_geometry, lam):
    basis = compute_mode_basis(lam)
    projection = port_projection(straight_mesh, basis, straight_geometry.ports[0])
    values = np.ones(straight_mesh.n_dofs)
    coefficients = projection.coefficients(values)
    assert coefficients[0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(coefficients[1:], 0.0, atol=1e-6)


def test_system_is_complex_symmetric(disk_mesh, lam):
    system = assemble(disk_mesh, compute_mode_basis(lam), 2.0)
    difference = system.full_matrix - system.full_matrix.T
    assert sparse_norm(difference) < 1e-12 * sparse_norm(system.full_matrix)
    assert system.load.shape == (system.dimension, 1)


def test_negative_eta_rejected(disk_mesh, lam):
    blocks = assemble_blocks(disk_mesh, compute_mode_basis(lam))
    with pytest.raises(ConfigError):
        blocks.system(-1.0)


def test_dirichlet_on_inclusion_drops_interior(disk_mesh, lam):
    system = assemble(disk_mesh, compute_mode_basis(lam), 0.0, DIRICHLET_ON_INCLUSION)
    assert INTERFACE in system.dirichlet_tags
    assert len(system.excluded) > 0
    assert not np.intersect1d(system.free, disk_mesh.dofs_on(INTERFACE)).size
    fields = solve(system)
    np.testing.assert_allclose(fields[0].values[system.constrained], 0.0)


def test_unknown_dirichlet_tag(disk_mesh, lam):
    with pytest.raises(ConfigError):
        assemble(disk_mesh, compute_mode_basis(lam), 0.0, dirichlet_on("symmetry_line"))


def test_flux_recovery_manufactured(straight_mesh):
    # u = z^2 has -laplace u = 2 and normal derivative 2 z_T on the truncation line
    u = straight_mesh.dof_coordinates[:, 0] ** 2
    load = load_vector(straight_mesh, lambda z, y: np.full_like(z, -2.0))
    flux = recover_flux(stiffness_matrix(straight_mesh), load, u, straight_mesh, TRUNCATION)
    np.testing.assert_allclose(flux.coefficients, 4.0, atol=1e-9)
    points, values = flux.samples()
    np.testing.assert_allclose(values, 4.0, atol=1e-9)
    np.testing.assert_allclose(flux.evaluate(points[:5]), 4.0, atol=1e-9)


def test_flux_needs_dirichlet(disk_mesh, lam):
    fields = solve(assemble(disk_mesh, compute_mode_basis(lam), 0.0, NEUMANN_ALL))
    with pytest.raises(ConfigError):
        boundary_flux(fields[0], INTERFACE)
    with pytest.raises(ConfigError):
        recover_flux(sp.identity(disk_mesh.n_dofs), np.zeros(disk_mesh.n_dofs), fields[0].values,
                     disk_mesh, "ligament")


def test_inclusion_norm_vanishes_for_sound_soft(disk_mesh, lam):
    basis = compute_mode_basis(lam)
    soft = solve(assemble(disk_mesh, basis, 0.0, DIRICHLET_ON_INCLUSION))[0]
    lossy = solve(assemble(disk_mesh, basis, 1.0))[0]
    assert inclusion_l2_norm(soft) == 0.0
    assert inclusion_l2_norm(lossy) > 0.0


def test_walls_are_neumann(straight_mesh, lam):
    system = assemble(straight_mesh, compute_mode_basis(lam), 0.0)
    assert system.dirichlet.size == 0
    assert WALL in straight_mesh.tags
