import numpy as np
import pytest

from app.core.errors import ConfigError
from app.services.oracle1d import (SlabSpec, slab_dirichlet_limit, slab_energy_defect, slab_field,
                                   slab_reflection, slab_reflection_fd)

from tests.conftest import MONOMODE_LAMBDA

# closed-form reflection at lambda = (0.8 pi)^2, slab (1, 2), b0 = 1
GOLDEN = {
    0.0: 1.0 + 0.0j,
    0.5: 0.33143957329729795 + 0.12062302407498897j,
    5.0: 0.52097660982470329 - 0.010113971147836104j,
    50.0: 0.74405048866062884 - 0.34032907508665955j,
    5000.0: 0.8043600390147374 - 0.56017237155371224j,
    1e6: 0.80870295086205102 - 0.58581149348883654j,
}
S_INF = 0.80901699437494767 - 0.5877852522924728j


def slab(eta: float) -> SlabSpec:
    return SlabSpec(lam=MONOMODE_LAMBDA, z1=1.0, z2=2.0, b0=1.0, eta=eta)


@pytest.mark.parametrize("eta", sorted(GOLDEN))
def test_golden_reflection(eta):
    assert abs(slab_reflection(slab(eta)) - GOLDEN[eta]) < 1e-12


def test_golden_modulus():
    assert abs(slab_reflection(slab(5.0))) == pytest.approx(0.52107477428563009, abs=1e-12)


@pytest.mark.parametrize("eta", [0.0, 0.5, 5.0, 50.0])
def test_energy_balance(eta):
    assert abs(slab_energy_defect(slab(eta))) < 1e-10


@pytest.mark.parametrize("eta", [0.5, 5.0])
def test_finite_difference_cross_check(eta):
    assert abs(slab_reflection_fd(slab(eta)) - GOLDEN[eta]) < 1e-8


def test_field_matches_reflection_outside():
    spec = slab(5.0)
    z = np.array([2.5, 3.0, 4.0])
    k = spec.k
    expected = np.exp(-1j * k * z) + GOLDEN[5.0] * np.exp(1j * k * z)
    np.testing.assert_allclose(slab_field(spec, z), expected, atol=1e-12)


@pytest.mark.parametrize("face", [1.0, 2.0])
def test_field_continuous_across_faces(face):
    spec = slab(5.0)
    z = np.array([face - 1e-9, face + 1e-9])
    u = slab_field(spec, z)
    du = slab_field(spec, z, derivative=True)
    assert abs(u[0] - u[1]) < 1e-7
    assert abs(du[0] - du[1]) < 1e-6



@pytest.mark.parametrize("eta", [0.0, 5.0, 1e4])
def test_wall_condition(eta):
    spec = slab(eta)
    assert abs(slab_field(spec, [0.0], derivative=True)[0]) < 1e-14
    # one-sided difference agrees with the zero slope
    u = slab_field(spec, [0.0, 1e-6])
    assert abs(u[1] - u[0]) < 1e-10


def test_skin_decay_inside_the_slab():
    spec = slab(1e4)
    u_mid, u_face = np.abs(slab_field(spec, [1.5, 2.0]))
    rate = np.sqrt(spec.lam * spec.b0 * spec.eta / 2.0)
    assert u_face > 0
    assert u_mid <= u_face * np.exp(-0.9 * rate * 0.5)

def test_dirichlet_limit_and_first_order_correction():
    spec = slab(1e6)
    limit = slab_dirichlet_limit(spec)
    assert abs(limit.S_inf - S_INF) < 1e-14
    assert limit.E == pytest.approx(2.0 * spec.k)

    r = slab_reflection(spec)
    prediction = limit.S_inf * (1.0 + spec.eta ** -0.5 * (-1.0 + 1j) * np.sqrt(2.0) / np.sqrt(spec.b0))
    assert abs(r - prediction) < 0.05 * abs(r - limit.S_inf)


def test_zeroth_order_rate():
    etas = np.array([1e3, 1e4, 1e5, 1e6])
    defects = [abs(slab_reflection(slab(eta)) - S_INF) for eta in etas]
    slope = np.polyfit(np.log(etas), np.log(defects), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.05)


def test_invalid_slabs():
    with pytest.raises(ConfigError):
        SlabSpec(lam=MONOMODE_LAMBDA, z1=2.0, z2=1.0)
    with pytest.raises(ConfigError):
        SlabSpec(lam=10.0, z1=1.0, z2=2.0)
    with pytest.raises(ConfigError):
        slab_field(slab(1.0), [5.0])
