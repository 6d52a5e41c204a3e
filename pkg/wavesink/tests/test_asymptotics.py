import numpy as np
import pytest

from app.core.errors import ConfigError, NonSmoothInclusionError
from app.schemas.geometry import GeometrySpec, InclusionSpec
from app.services.asymptotics import (BoundaryLayerProfile, fit_loglog_slope, interior_decay_norm,
                                      interior_relative_error, large_eta_model, rate_study, reconstruct_interior,
                                      small_eta_model)
from app.services.geometry import build_waveguide
from app.services.mesh import MeshControls
from app.services.oracle1d import SlabSpec, slab_dirichlet_limit
from app.services.scattering import ScatteringSolver


def test_fit_loglog_slope():
    x = np.logspace(-3, -1, 5)
    assert fit_loglog_slope(x, 3.0 * x ** 2) == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        fit_loglog_slope([1.0], [1.0])
    with pytest.raises(ConfigError):
        fit_loglog_slope([1.0, 2.0], [0.0, 1.0])


def test_boundary_layer_profile(lam):
    profile = BoundaryLayerProfile(lam)
    b = np.array([0.5, 1.0, 3.0])
    np.testing.assert_allclose(profile.derivative(0.0, b), 1.0, atol=1e-14)
    # E'' = -i lam b E, decaying into the inclusion
    t = 0.7
    ratio = profile.derivative(t, b) / profile(t, b)
    np.testing.assert_allclose(ratio ** 2, -1j * lam * b, rtol=1e-12)
    assert np.all(np.abs(profile(5.0, b)) < np.abs(profile(0.0, b)))


def test_small_eta_rate(disk_geometry, lam, coarse):
    model = small_eta_model(disk_geometry, lam, coarse)
    np.testing.assert_allclose(model.predict(0.0), model.S0)
    report = rate_study(disk_geometry, lam, np.logspace(-3, -1, 5), "small", coarse, model=model)
    assert report.slope_defect0 == pytest.approx(1.0, abs=0.1)
    assert report.slope_defect1 == pytest.approx(2.0, abs=0.3)
    assert [r.eta for r in report.rows] == sorted(r.eta for r in report.rows)


def test_slab_sound_soft_limit(slab_geometry, lam, medium):
    model = large_eta_model(slab_geometry, lam, medium)
    exact = slab_dirichlet_limit(SlabSpec(lam=lam, z1=1.0, z2=2.0))
    assert abs(model.S_inf[0, 0] - exact.S_inf) < 1e-4
    assert model.E[0, 0].real == pytest.approx(exact.E, rel=1e-3)
    assert model.prefactor_defect < 1e-8


def test_large_eta_prefactor_identity(disk_geometry, lam, coarse):
    model = large_eta_model(disk_geometry, lam, coarse)
    assert model.prefactor_defect < 1e-8
    assert model.E[0, 0].real > 0
    assert abs(model.E[0, 0].imag) < 1e-12
    record = model.record()
    assert record.prefactor_defect == model.prefactor_defect


def test_corners_rejected(lam, coarse):
    spec = GeometrySpec(truncation_z=3.0,
                        inclusion=InclusionSpec(shape="rectangle", corner=(0.8, 0.3), width=0.4, height=0.4))
    with pytest.raises(NonSmoothInclusionError):
        large_eta_model(build_waveguide(spec, lam), lam, coarse)


def test_reconstruction_arguments(disk_geometry, lam, coarse):
    model = large_eta_model(disk_geometry, lam, coarse)
    mesh = model.fields[0].mesh
    with pytest.raises(ConfigError):
        reconstruct_interior(model, 0.0, mesh)
    with pytest.raises(ConfigError):
        reconstruct_interior(model, 1e3, mesh, j=3)


def test_reconstruction_vanishes_deep_inside(disk_geometry, lam, coarse):
    model = large_eta_model(disk_geometry, lam, coarse)
    mesh = model.fields[0].mesh
    field = reconstruct_interior(model, 1e4, mesh)
    coords = mesh.dof_coordinates
    deep = np.linalg.norm(coords - [1.0, 0.5], axis=1) < 0.2
    assert deep.any()
    assert np.abs(field.values[deep]).max() < 1e-6
    outside = mesh.region_mask("exterior")
    exterior_only = np.setdiff1d(np.unique(mesh.triangle_dofs[outside]),
                                 np.unique(mesh.triangle_dofs[~outside]))
    assert np.all(field.values[exterior_only] == 0)


@pytest.mark.slow
def test_large_eta_rates(disk_geometry, lam):
    controls = MeshControls(h=0.05)
    etas = np.logspace(3, 6, 5)
    report = rate_study(disk_geometry, lam, etas, "large", controls)
    assert report.slope_defect0 == pytest.approx(-0.5, abs=0.1)
    assert report.slope_defect1 <= -0.7
    assert report.slope_interior == pytest.approx(-0.75, abs=0.15)

    decay = interior_decay_norm(disk_geometry, lam, etas, controls)
    assert decay.slope == pytest.approx(report.slope_interior)


@pytest.mark.slow
def test_skin_field_matches_reconstruction(disk_geometry, lam):
    controls = MeshControls(h=0.05)
    model = large_eta_model(disk_geometry, lam, controls)
    direct = ScatteringSolver(disk_geometry, lam, controls).solve(1e3)
    field = direct.fields[0]
    assert not field.mesh.grading.layer_unresolved
    reconstruction = reconstruct_interior(model, 1e3, field.mesh)
    assert interior_relative_error(field, reconstruction) <= 0.3
