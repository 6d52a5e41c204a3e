"""Closed-form reflection of a full-width dissipative slab in a straight guide.

With b constant on (z1, z2) and independent of y, the piston mode decouples:

    u'' + lambda (1 + i eta b0 1_(z1,z2)) u = 0,  u'(0) = 0,
    u = exp(-i k z) + R exp(i k z)  for z > z2,  k = sqrt(lambda).

The slab wavenumber q = k sqrt(1 + i eta b0) is taken on the principal
branch so the field decays into the slab.
"""
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.sparse.linalg import spsolve

from app.core.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlabSpec:
    lam: float
    z1: float
    z2: float
    b0: float = 1.0
    eta: float = 0.0
    truncation_z: float = 4.0

    def __post_init__(self):
        if not 0.0 < self.z1 < self.z2 < self.truncation_z:
            raise ConfigError("slab needs 0 < z1 < z2 < truncation_z")
        if not 0.0 < self.lam < np.pi ** 2:
            raise ConfigError(f"slab oracle is monomode: need 0 < lambda < pi^2, got {self.lam}")
        if not self.b0 > 0:
            raise ConfigError("b0 must be positive")
        if self.eta < 0:
            raise ConfigError("eta must be non-negative")

    @property
    def k(self) -> float:
        return float(np.sqrt(self.lam))

    @property
    def q(self) -> complex:
        return self.k * np.sqrt(1.0 + 1j * self.eta * self.b0)


@dataclass(frozen=True)
class SlabLimit:
    """Sound-soft limit: Dirichlet face at z2 seen from the incoming side."""

    S_inf: complex
    E: float
    flux: complex  # normal derivative into the slab, incident wave normalized by (2k)^(-1/2)


def slab_reflection(spec: SlabSpec) -> complex:
    k, q = spec.k, spec.q
    c, s = np.cos(k * spec.z1), np.sin(k * spec.z1)
    gamma = (1j * q * c + k * s) / (1j * q * c - k * s)
    p = np.exp(2j * q * (spec.z2 - spec.z1))
    x = (p - gamma) / (p + gamma)
    return complex(np.exp(-2j * k * spec.z2) * (k + q * x) / (k - q * x))


def _coefficients(spec: SlabSpec) -> np.ndarray:
    """(A, C, D, R) with u = A cos(kz) left, C e^{iq(z-z1)} + D e^{iq(z2-z)} inside."""
    k, q = spec.k, spec.q
    p = np.exp(1j * q * (spec.z2 - spec.z1))
    c, s = np.cos(k * spec.z1), np.sin(k * spec.z1)
    e_plus, e_minus = np.exp(1j * k * spec.z2), np.exp(-1j * k * spec.z2)
    matrix = np.array([
        [c, -1.0, -p, 0.0],
        [-k * s, -1j * q, 1j * q * p, 0.0],
        [0.0, p, 1.0, -e_plus],
        [0.0, 1j * q * p, -1j * q, -1j * k * e_plus],
    ], dtype=complex)
    rhs = np.array([0.0, 0.0, e_minus, -1j * k * e_minus], dtype=complex)
    return np.linalg.solve(matrix, rhs)


def slab_field(spec: SlabSpec, z, derivative: bool = False) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if np.any(z < 0.0) or np.any(z > spec.truncation_z):
        raise ConfigError(f"z outside [0, {spec.truncation_z}]")
    a, c_in, d_in, r = _coefficients(spec)
    k, q = spec.k, spec.q
    left = z < spec.z1
    right = z > spec.z2
    inside = ~(left | right)
    out = np.zeros(z.shape, dtype=complex)
    zl, zi, zr = z[left], z[inside], z[right]
    if derivative:
        out[left] = -a * k * np.sin(k * zl)
        out[inside] = 1j * q * (c_in * np.exp(1j * q * (zi - spec.z1)) - d_in * np.exp(1j * q * (spec.z2 - zi)))
        out[right] = -1j * k * np.exp(-1j * k * zr) + 1j * k * r * np.exp(1j * k * zr)
    else:
        out[left] = a * np.cos(k * zl)
        out[inside] = c_in * np.exp(1j * q * (zi - spec.z1)) + d_in * np.exp(1j * q * (spec.z2 - zi))
        out[right] = np.exp(-1j * k * zr) + r * np.exp(1j * k * zr)
    return out


def slab_energy_defect(spec: SlabSpec) -> float:
    """|R|^2 + 2 lambda eta b0 int_{z1}^{z2} |u|^2 dz - 1 with u normalized like w^-, by (2k)^(-1/2)."""
    r = slab_reflection(spec)
    absorbed = 0.0
    if spec.eta > 0:
        integral, _ = quad(lambda t: float(np.abs(slab_field(spec, t)) ** 2), spec.z1, spec.z2,
                           epsabs=1e-15, epsrel=1e-13, limit=200)
        absorbed = 2.0 * spec.lam * spec.eta * spec.b0 * integral / (2.0 * spec.k)
    return float(abs(r) ** 2 + absorbed - 1.0)


def slab_reflection_fd(spec: SlabSpec, n_points: int = 40_001, extrapolate: bool = True) -> complex:
    """Reflection from second-order finite differences on [0, truncation_z].

    Ghost points give u'(0) = 0 and the radiation condition
    u' = i k u - 2 i k exp(-i k z_T) at the right end. The dissipation is
    cell-averaged so the coefficient jumps do not spoil the order. With
    `extrapolate` the solve is repeated at half the spacing and the h^2
    term is cancelled by Richardson extrapolation; the slab faces must sit
    on grid nodes for that expansion to hold.
    """
    if n_points < 3:
        raise ConfigError("finite differences need at least 3 points")
    coarse = _fd_reflection(spec, n_points)
    if not extrapolate:
        return coarse
    fine = _fd_reflection(spec, 2 * n_points - 1)
    return (4.0 * fine - coarse) / 3.0


def _fd_reflection(spec: SlabSpec, n_points: int) -> complex:
    k = spec.k
    z, h = np.linspace(0.0, spec.truncation_z, n_points, retstep=True)
    lo = np.clip(z - 0.5 * h, spec.z1, spec.z2)
    hi = np.clip(z + 0.5 * h, spec.z1, spec.z2)
    fraction = (hi - lo) / h
    kappa = spec.lam * (1.0 + 1j * spec.eta * spec.b0 * fraction)

    main = -2.0 / h ** 2 + kappa
    upper = np.full(n_points - 1, 1.0 / h ** 2, dtype=complex)
    lower = upper.copy()
    upper[0] = 2.0 / h ** 2
    lower[-1] = 2.0 / h ** 2
    main = main.astype(complex)
    main[-1] += 2j * k / h
    rhs = np.zeros(n_points, dtype=complex)
    rhs[-1] = 4j * k * np.exp(-1j * k * spec.truncation_z) / h

    matrix = sp.diags([lower, main, upper], [-1, 0, 1], format="csc")
    u = spsolve(matrix, rhs)
    z_t = spec.truncation_z
    return complex((u[-1] - np.exp(-1j * k * z_t)) * np.exp(-1j * k * z_t))


def slab_dirichlet_limit(spec: SlabSpec) -> SlabLimit:
    k = spec.k
    flux = 2j * k * np.exp(-1j * k * spec.z2) / np.sqrt(2.0 * k)
    return SlabLimit(S_inf=complex(-np.exp(-2j * k * spec.z2)),
                     E=float(2.0 * k / np.sqrt(spec.b0)), flux=complex(flux))
