import numpy as np
import pytest

from app.schemas.geometry import DissipationSpec, GeometrySpec, InclusionSpec
from app.services.geometry import build_waveguide
from app.services.mesh import MeshControls

MONOMODE_LAMBDA = (0.8 * np.pi) ** 2
MULTIMODE_LAMBDA = (4.8 * np.pi) ** 2


@pytest.fixture
def lam():
    return MONOMODE_LAMBDA


@pytest.fixture
def disk_spec():
    return GeometrySpec(truncation_z=3.0,
                        inclusion=InclusionSpec(shape="disk", center=(1.0, 0.5), radius=0.3),
                        dissipation=DissipationSpec(b0=1.0))


@pytest.fixture
def slab_spec():
    return GeometrySpec(truncation_z=4.0, inclusion=InclusionSpec(shape="slab", z1=1.0, z2=2.0))


@pytest.fixture
def disk_geometry(disk_spec, lam):
    return build_waveguide(disk_spec, lam)


@pytest.fixture
def slab_geometry(slab_spec, lam):
    return build_waveguide(slab_spec, lam)


@pytest.fixture
def straight_geometry(lam):
    return build_waveguide(GeometrySpec(truncation_z=2.0), lam)


@pytest.fixture
def coarse():
    return MeshControls(h=0.1)


@pytest.fixture
def medium():
    return MeshControls(h=0.05)
