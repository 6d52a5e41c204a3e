import numpy as np
import pytest

from app.core.errors import ConfigError, ThresholdError
from app.services.modes import (compute_mode_basis, evaluate_wave, evaluate_wave_dz, project_trace,
                                symplectic_pairing, wave_trace)

from tests.conftest import MONOMODE_LAMBDA, MULTIMODE_LAMBDA


def test_propagating_count():
    assert compute_mode_basis(MONOMODE_LAMBDA).J == 1
    assert compute_mode_basis(MULTIMODE_LAMBDA).J == 5
    assert compute_mode_basis(30.0).J == 2


def test_wavenumbers_and_decay_rates():
    basis = compute_mode_basis(MULTIMODE_LAMBDA, 10)
    j = np.arange(5)
    np.testing.assert_allclose(basis.alpha, np.pi * np.sqrt(4.8 ** 2 - j ** 2), rtol=1e-14)
    np.testing.assert_allclose(basis.decay, np.pi * np.sqrt(np.arange(5, 10) ** 2 - 4.8 ** 2), rtol=1e-14)
    assert basis.first_evanescent_gap == pytest.approx(basis.decay[0])


def test_dtn_symbols():
    basis = compute_mode_basis(MONOMODE_LAMBDA, 6)
    mu = basis.dtn_symbols
    assert mu[0] == pytest.approx(1j * 0.8 * np.pi)
    assert np.all(mu[1:].real < 0) and np.all(mu[1:].imag == 0)


@pytest.mark.parametrize("lam", [np.pi ** 2, (2 * np.pi) ** 2])
def test_threshold_rejected(lam):
    with pytest.raises(ThresholdError):
        compute_mode_basis(lam)


def test_invalid_arguments():
    with pytest.raises(ConfigError):
        compute_mode_basis(-1.0)
    with pytest.raises(ConfigError):
        compute_mode_basis(MULTIMODE_LAMBDA, n_terms=5)


def test_transverse_basis_orthonormal():
    basis = compute_mode_basis(MULTIMODE_LAMBDA, 8)
    x, w = np.polynomial.legendre.leggauss(64)
    y, w = 0.5 * (x + 1), 0.5 * w
    phi = basis.phi_all(y)
    np.testing.assert_allclose((phi * w) @ phi.T, np.eye(8), atol=1e-13)
    np.testing.assert_allclose(phi[3], basis.phi(3, y))


def test_symplectic_pairing_identities():
    basis = compute_mode_basis(MULTIMODE_LAMBDA)
    z = 0.7
    for j in range(basis.J):
        for k in range(basis.J):
            delta = 1.0 if j == k else 0.0
            for sign in (1, -1):
                same = symplectic_pairing(wave_trace(basis, j, sign, z), wave_trace(basis, k, sign, z), basis)
                cross = symplectic_pairing(wave_trace(basis, j, sign, z), wave_trace(basis, k, -sign, z), basis)
                assert abs(same - sign * 1j * delta) < 1e-10
                assert abs(cross) < 1e-10


def test_projected_trace_matches_analytic():
    basis = compute_mode_basis(MULTIMODE_LAMBDA)
    z = 1.3
    projected = project_trace(basis, lambda y, z: evaluate_wave(basis, 2, 1, y, z),
                              lambda y, z: evaluate_wave_dz(basis, 2, 1, y, z), z)
    exact = wave_trace(basis, 2, 1, z)
    np.testing.assert_allclose(projected.values, exact.values, atol=1e-12)
    np.testing.assert_allclose(projected.derivatives, exact.derivatives, atol=1e-11)



def test_symplectic_pairing_from_quadrature_traces():
    basis = compute_mode_basis(MULTIMODE_LAMBDA)
    assert basis.J == 5
    z = 0.4
    traces = {(j, sign): project_trace(basis, lambda y, z, j=j, sign=sign: evaluate_wave(basis, j, sign, y, z),
                                       lambda y, z, j=j, sign=sign: evaluate_wave_dz(basis, j, sign, y, z), z)
              for j in range(basis.J) for sign in (1, -1)}
    for j in range(basis.J):
        for k in range(basis.J):
            delta = 1.0 if j == k else 0.0
            for sign in (1, -1):
                same = symplectic_pairing(traces[j, sign], traces[k, sign], basis)
                cross = symplectic_pairing(traces[j, sign], traces[k, -sign], basis)
                assert abs(same - sign * 1j * delta) < 1e-10
                assert abs(cross) < 1e-10

def test_pairing_rejects_mismatched_sections():
    basis = compute_mode_basis(MONOMODE_LAMBDA)
    with pytest.raises(ConfigError):
        symplectic_pairing(wave_trace(basis, 0, 1, 0.0), wave_trace(basis, 0, 1, 1.0), basis)
    with pytest.raises(ConfigError):
        evaluate_wave(basis, 1, 1, 0.5, 0.0)
