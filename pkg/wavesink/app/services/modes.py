"""Transverse modes of the unit strip and the propagating waves built on them.

The cross-section is (0, 1) with Neumann walls, so the eigenpairs are
analytic: lambda_j = (j*pi)^2, phi_0 = 1 and phi_j = sqrt(2) cos(j*pi*y).
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from app.core.config import settings
from app.core.errors import ConfigError, ThresholdError

logger = logging.getLogger(__name__)

THRESHOLD_TOL = 1e-12


@dataclass(frozen=True)
class ModeBasis:
    lam: float
    n_terms: int
    J: int

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        return (np.arange(self.n_terms) * np.pi) ** 2

    @cached_property
    def alpha(self) -> np.ndarray:
        """Wavenumbers of the J propagating modes."""
        return np.sqrt(self.lam - self.eigenvalues[: self.J])

    @cached_property
    def decay(self) -> np.ndarray:
        """Evanescent rates for modes J..N-1."""
        return np.sqrt(self.eigenvalues[self.J :] - self.lam)

    @cached_property
    def dtn_symbols(self) -> np.ndarray:
        # outward normal derivative of an outgoing/decaying mode divided by its trace
        return np.concatenate([1j * self.alpha, -self.decay.astype(complex)])

    @property
    def first_evanescent_gap(self) -> float:
        """sqrt(lambda_J - lambda), the slowest evanescent decay rate."""
        return float(np.sqrt((self.J * np.pi) ** 2 - self.lam))

    def phi(self, k: int, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if k == 0:
            return np.ones_like(y)
        return np.sqrt(2.0) * np.cos(k * np.pi * y)

    def phi_all(self, y) -> np.ndarray:
        """All N eigenfunctions at points y, shape (N, len(y))."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        k = np.arange(self.n_terms)[:, None]
        values = np.sqrt(2.0) * np.cos(k * np.pi * y[None, :])
        values[0] = 1.0
        return values

    def same_as(self, other: "ModeBasis") -> bool:
        return self.lam == other.lam and self.n_terms == other.n_terms


@dataclass(frozen=True)
class ModalTrace:
    """Modal coefficients (v, phi_k) and (dv/dz, phi_k) of a field on one cross-section."""

    basis: ModeBasis
    z: float
    values: np.ndarray
    derivatives: np.ndarray


def compute_mode_basis(lam: float, n_terms: int | None = None) -> ModeBasis:
    n_terms = settings.DTN_TERMS if n_terms is None else n_terms
    if not lam > 0:
        raise ConfigError(f"lambda must be positive, got {lam}")

    j_cap = int(np.sqrt(lam) / np.pi) + 2
    thresholds = (np.arange(j_cap + 1) * np.pi) ** 2
    close = np.abs(thresholds - lam) <= THRESHOLD_TOL * max(1.0, lam)
    if close.any():
        j = int(np.flatnonzero(close)[0])
        raise ThresholdError(f"lambda={lam!r} sits on the cut-off ({j}*pi)^2")

    J = int(np.count_nonzero(thresholds < lam))
    if n_terms <= J:
        raise ConfigError(f"n_terms={n_terms} must exceed the propagating count J={J}")

    logger.debug(f"Mode basis lambda={lam:.6g}: J={J}, N={n_terms}")
    return ModeBasis(lam=float(lam), n_terms=int(n_terms), J=J)


def _check_wave(basis: ModeBasis, j: int, sign: int) -> None:
    if not 0 <= j < basis.J:
        raise ConfigError(f"mode {j} is not propagating (J={basis.J})")
    if sign not in (1, -1):
        raise ConfigError(f"sign must be +1 or -1, got {sign}")


def evaluate_wave(basis: ModeBasis, j: int, sign: int, y, z) -> np.ndarray:
    """w_j^sign(y, z) = (2 alpha_j)^(-1/2) exp(sign i alpha_j z) phi_j(y)."""
    _check_wave(basis, j, sign)
    a = basis.alpha[j]
    z = np.asarray(z, dtype=float)
    return (2.0 * a) ** -0.5 * np.exp(sign * 1j * a * z) * basis.phi(j, y)


def evaluate_wave_dz(basis: ModeBasis, j: int, sign: int, y, z) -> np.ndarray:
    return sign * 1j * basis.alpha[j] * evaluate_wave(basis, j, sign, y, z)


def wave_trace(basis: ModeBasis, j: int, sign: int, z: float) -> ModalTrace:
    _check_wave(basis, j, sign)
    values = np.zeros(basis.n_terms, dtype=complex)
    a = basis.alpha[j]
    values[j] = (2.0 * a) ** -0.5 * np.exp(sign * 1j * a * z)
    return ModalTrace(basis, z, values, sign * 1j * a * values)


def project_trace(basis: ModeBasis, value: Callable, dz: Callable, z: float,
                  n_points: int | None = None) -> ModalTrace:
    """Modal coefficients of a cross-section trace by Gauss-Legendre quadrature.

    `value(y, z)` and `dz(y, z)` are vectorized in y. The default rule puts
    32 points on every oscillation of the highest retained mode.
    """
    n_points = n_points or 32 * basis.n_terms
    x, w = leggauss(n_points)
    y = 0.5 * (x + 1.0)
    w = 0.5 * w
    phi = basis.phi_all(y)
    values = phi @ (w * value(y, z))
    derivatives = phi @ (w * dz(y, z))
    return ModalTrace(basis, z, values.astype(complex), derivatives.astype(complex))


def symplectic_pairing(v: ModalTrace, v2: ModalTrace, basis: ModeBasis) -> complex:
    """q(v, v') = int_0^1 (dv/dz conj(v') - v conj(dv'/dz)) dy, from modal coefficients."""
    if not (v.basis.same_as(basis) and v2.basis.same_as(basis)):
        raise ConfigError("symplectic pairing of traces from mismatched mode bases")
    if v.z != v2.z:
        raise ConfigError(f"traces taken at different cross-sections z={v.z} and z={v2.z}")
    return complex(np.sum(v.derivatives * np.conj(v2.values) - v.values * np.conj(v2.derivatives)))
