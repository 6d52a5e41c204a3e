import numpy as np
import pytest
from scipy.spatial import cKDTree

from app.core.errors import MeshError
from app.schemas.geometry import GeometrySpec, LigamentSpec
from app.services.geometry import INTERFACE, TRUNCATION, WALL, build_waveguide
from app.services.mesh import MeshControls, build_mesh, grade_near_interface, skin_depth, triangulate


def test_skin_depth(lam):
    assert skin_depth(lam, 1.0, 1e3) == pytest.approx(np.sqrt(2.0) / np.sqrt(lam * 1e3))
    assert skin_depth(lam, 4.0, 1e3) == pytest.approx(0.5 * skin_depth(lam, 1.0, 1e3))


def test_disk_mesh_invariants(disk_geometry):
    mesh = triangulate(disk_geometry, 0.1)
    mesh.check_invariants()
    assert np.all(mesh.signed_areas() > 0)
    assert mesh.edge_lengths().max() <= 0.2
    assert mesh.tags == {WALL, TRUNCATION, INTERFACE}
    assert mesh.n_dofs == mesh.n_vertices + mesh.n_edges
    assert mesh.triangle_dofs.shape == (len(mesh.triangles), 6)


def test_regions_cover_the_domain(disk_geometry):
    mesh = triangulate(disk_geometry, 0.1)
    areas = mesh.signed_areas()
    inside = areas[mesh.region_mask("inclusion")].sum()
    assert areas.sum() == pytest.approx(3.0, rel=1e-3)
    assert inside == pytest.approx(np.pi * 0.09, rel=3e-2)


def test_interface_nodes_on_the_circle(disk_geometry):
    mesh = triangulate(disk_geometry, 0.1)
    curve = disk_geometry.inclusion.curve
    vertices = np.unique(mesh.tagged_edges(INTERFACE))
    _, depth = curve.project(mesh.vertices[vertices])
    assert np.abs(depth).max() < 1e-12
    _, mid_depth = curve.project(mesh.midpoints[mesh.tagged_edge_ids(INTERFACE)])
    assert np.abs(mid_depth).max() < 1e-12


def test_edge_dofs_order(disk_geometry):
    mesh = triangulate(disk_geometry, 0.1)
    dofs = mesh.edge_dofs(TRUNCATION)
    coords = mesh.dof_coordinates
    np.testing.assert_allclose(coords[dofs[:, 1]], 0.5 * (coords[dofs[:, 0]] + coords[dofs[:, 2]]), atol=1e-14)
    np.testing.assert_allclose(coords[np.unique(dofs), 0], 3.0)


def test_feature_thinner_than_mesh_rejected(lam):
    geometry = build_waveguide(GeometrySpec(truncation_z=3.0,
                                            ligament=LigamentSpec(attach_z0=1.0, width=0.05, length=0.5)), lam)
    with pytest.raises(MeshError):
        triangulate(geometry, 0.1)


def test_grading_resolves_the_skin(disk_geometry, lam):
    base = triangulate(disk_geometry, 0.1)
    graded = grade_near_interface(base, 100.0, 1.0, 4, lam=lam)
    d = skin_depth(lam, 1.0, 100.0)
    assert graded.grading.d_skin == pytest.approx(d)
    assert graded.grading.h_layer == pytest.approx(d / 4)
    assert not graded.grading.layer_unresolved
    assert len(graded.triangles) > len(base.triangles)

    # edges touching the interface respect the layer size
    interface = graded.tagged_edges(INTERFACE)
    lengths = np.linalg.norm(graded.vertices[interface[:, 0]] - graded.vertices[interface[:, 1]], axis=1)
    assert lengths.max() <= 1.01 * d / 4


def test_grading_floor_flags_unresolved(disk_geometry, lam):
    base = triangulate(disk_geometry, 0.1, min_h_divisor=4.0)
    graded = grade_near_interface(base, 1e4, 1.0, 4, lam=lam)
    assert graded.grading.layer_unresolved
    assert graded.grading.h_layer == pytest.approx(0.025)



def _centroids(mesh, mask):
    c = mesh.vertices[mesh.triangles[mask, :3]].mean(axis=1)
    return c[np.lexsort((c[:, 1], c[:, 0]))]


def test_grading_refines_without_coarsening(disk_geometry, lam):
    base = triangulate(disk_geometry, 0.1)
    graded = grade_near_interface(base, 100.0, 1.0, 4, lam=lam)

    distance, _ = cKDTree(graded.vertices).query(base.vertices)
    assert distance.max() < 1e-12
    assert graded.edge_lengths().max() <= base.edge_lengths().max() + 1e-12

    # far from the interface the triangulation is left alone
    center = np.array([1.0, 0.5])
    far_base = np.linalg.norm(base.vertices[base.triangles[:, :3]].mean(axis=1) - center, axis=1) > 1.1
    far_graded = np.linalg.norm(graded.vertices[graded.triangles[:, :3]].mean(axis=1) - center, axis=1) > 1.1
    assert far_base.sum() > 0
    np.testing.assert_allclose(_centroids(graded, far_graded), _centroids(base, far_base), atol=1e-14)


def test_grading_below_the_floor_still_meshes(disk_geometry, lam):
    base = triangulate(disk_geometry, 0.1, min_h_divisor=8.0)
    graded = grade_near_interface(base, 1e10, 1.0, 4, lam=lam)
    graded.check_invariants()
    assert graded.grading.layer_unresolved
    assert graded.grading.h_layer == pytest.approx(0.0125)

    areas_base, areas_graded = base.signed_areas(), graded.signed_areas()
    inside_base = areas_base[base.region_mask("inclusion")].sum()
    inside_graded = areas_graded[graded.region_mask("inclusion")].sum()
    assert inside_base <= inside_graded + 1e-12
    assert inside_graded <= np.pi * 0.09
    assert areas_graded.sum() == pytest.approx(areas_base.sum(), rel=1e-3)

    interface = graded.tagged_edges(INTERFACE)
    lengths = np.linalg.norm(graded.vertices[interface[:, 0]] - graded.vertices[interface[:, 1]], axis=1)
    assert lengths.max() <= 1.01 * 0.0125

def test_build_mesh_skips_grading_at_zero_eta(disk_geometry):
    controls = MeshControls(h=0.1)
    assert build_mesh(disk_geometry, controls, eta=0.0).grading.h_layer is None
    assert build_mesh(disk_geometry, MeshControls(h=0.1, grade=False), eta=1e3).grading.h_layer is None
