"""Monomode perfect-absorber synthesis.

A quarter-wavelength branch (width pi/sqrt(lambda)) hung on the top wall
reflects like a point scatterer whose coefficient runs over the circle of
centre -1/2 and radius 1/2 as its length L varies. Placing it at
sigma + 2 kappa pi/sqrt(lambda), with sigma chosen from the base
reflection S^eta, lets a length sweep cancel the total reflection.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from app.core.config import settings
from app.core.errors import ConfigError, GeometryError
from app.schemas.geometry import GeometrySpec
from app.schemas.results import AbsorberReport, ComplexMatrix, HalfGuideRecord, LSample
from app.services.geometry import (TRUNCATION, DomainKind, Geometry, build_absorber_domain, build_branch_guide,
                                   build_half_guide, build_waveguide, quarter_wavelength)
from app.services.fem import Field
from app.services.mesh import MeshControls
from app.services.modes import compute_mode_basis
from app.services.scattering import ScatteringSolver, eta_sweep, scattering_matrix
from app.utils.workers import ordered_map

logger = logging.getLogger(__name__)

MAX_KAPPA = 50
SHALLOWEST_BRANCH_CELLS = 2.5  # branch depth in mesh cells; triangulate needs at least 2


def _require_monomode(lam: float) -> None:
    J = compute_mode_basis(lam).J
    if J != 1:
        raise ConfigError(f"absorber design is monomode only, lambda={lam:.6g} gives J={J}")


# ---------------------------------------------------------------- eta scan

@dataclass(frozen=True)
class EtaMinimum:
    eta_star: float
    min_abs_S: float
    interior: bool
    etas: np.ndarray
    abs_S: np.ndarray


def eta_minimum_scan(geometry: Geometry, lam: float, eta_grid, controls: MeshControls | None = None,
                     workers: int | None = None) -> EtaMinimum:
    """Grid minimum of |S^eta| refined in log eta to relative tolerance ETA_REL_TOL."""
    _require_monomode(lam)
    records = eta_sweep(geometry, lam, eta_grid, controls, workers=workers)
    etas = np.array([r.eta for r in records])
    abs_s = np.array([abs(r.S.to_array()[0, 0]) for r in records])
    i = int(np.argmin(abs_s))
    if i == 0 or i == len(etas) - 1 or etas[i - 1] <= 0:
        logger.warning(f"|S| minimum at the grid end eta={etas[i]:.3g}: no interior minimum bracketed")
        return EtaMinimum(float(etas[i]), float(abs_s[i]), False, etas, abs_s)

    solver = ScatteringSolver(geometry, lam, controls)
    found = minimize_scalar(lambda x: abs(solver.solve(float(np.exp(x))).S[0, 0]),
                            bounds=(np.log(etas[i - 1]), np.log(etas[i + 1])), method="bounded",
                            options={"xatol": np.log1p(settings.ETA_REL_TOL)})
    eta_star, value = float(np.exp(found.x)), float(found.fun)
    if value > abs_s[i]:
        eta_star, value = float(etas[i]), float(abs_s[i])
    logger.info(f"|S| minimum {value:.4g} at eta*={eta_star:.5g}")
    return EtaMinimum(eta_star, value, True, etas, abs_s)


# ---------------------------------------------------------------- placement

def sigma_for_target(S_eta: complex, lam: float, k: int = 0) -> float:
    """Branch offset solving 2 sqrt(lambda) sigma + beta = arccos(-alpha) mod 2 pi.

    The representative is taken in [0, pi/sqrt(lambda)) and shifted by
    k pi/sqrt(lambda).
    """
    alpha = abs(S_eta)
    if alpha >= 1.0:
        raise ConfigError(f"|S_eta|={alpha:.6g} must be below 1 for a perfect absorber")
    if k < 0:
        raise ConfigError("k offset must be non-negative")
    beta = float(np.mod(np.angle(S_eta), 2.0 * np.pi))
    period = np.pi / np.sqrt(lam)
    sigma = (np.arccos(-alpha) - beta) / (2.0 * np.sqrt(lam))
    return float(np.mod(sigma, period) + k * period)


def evanescent_coupling_bound(lam: float, gap: float) -> float:
    """exp(-sqrt(lambda_J - lambda) gap), the decay of the slowest evanescent mode across gap."""
    if gap <= 0:
        return 1.0
    return float(np.exp(-compute_mode_basis(lam).first_evanescent_gap * gap))


def _feature_right(spec: GeometrySpec, lam: float) -> float:
    return build_waveguide(spec, lam).feature_extent


def _branch_gap(spec: GeometrySpec, sigma: float, kappa: int, lam: float,
                ligament_width: float | None) -> float:
    ell = quarter_wavelength(lam)
    width = ell if ligament_width is None else ligament_width
    foot = sigma + 2.0 * kappa * np.pi / np.sqrt(lam) - 0.5 * width
    return foot - _feature_right(spec, lam)


def choose_kappa(spec: GeometrySpec, sigma: float, lam: float, tol: float | None = None,
                 ligament_width: float | None = None) -> int:
    """Smallest kappa whose branch builds and whose coupling bound is below tol."""
    tol = settings.SEPARATION_TOL if tol is None else tol
    for kappa in range(MAX_KAPPA + 1):
        try:
            build_absorber_domain(spec, sigma, kappa, 1.5, lam, ligament_width)
        except GeometryError:
            continue
        if evanescent_coupling_bound(lam, _branch_gap(spec, sigma, kappa, lam, ligament_width)) < tol:
            return kappa
    raise ConfigError(f"no kappa <= {MAX_KAPPA} separates the branch to tolerance {tol:g}")


# ---------------------------------------------------------------- half guide

@dataclass(eq=False)
class HalfGuideCoefficients:
    L: float
    lam: float
    r: complex
    R: complex
    neumann_field: Field | None = field(default=None, repr=False)
    mixed_field: Field | None = field(default=None, repr=False)

    @property
    def reflection(self) -> complex:
        return 0.5 * (self.r + self.R)

    @property
    def transmission(self) -> complex:
        return 0.5 * (self.r - self.R)

    def record(self) -> HalfGuideRecord:
        return HalfGuideRecord(L=self.L, lam=self.lam, r=ComplexMatrix.from_array(self.r),
                               R=ComplexMatrix.from_array(self.R),
                               reflection=ComplexMatrix.from_array(self.reflection),
                               transmission=ComplexMatrix.from_array(self.transmission))


def half_guide_coefficients(L: float, lam: float, controls: MeshControls | None = None) -> HalfGuideCoefficients:
    """Neumann and mixed half-guide reflections of the branch guide."""
    _require_monomode(lam)
    neumann = scattering_matrix(build_half_guide(L, lam, DomainKind.HALF_GUIDE_NEUMANN), 0.0, lam, controls)
    mixed = scattering_matrix(build_half_guide(L, lam, DomainKind.HALF_GUIDE_MIXED), 0.0, lam, controls)
    r, R = neumann.S[0, 0], mixed.S[0, 0]
    logger.info(f"Half guide L={L:.5g}: |r|={abs(r):.6f}, R={R:.6f}")
    return HalfGuideCoefficients(float(L), float(lam), complex(r), complex(R),
                                  neumann_field=neumann.fields[0], mixed_field=mixed.fields[0])


def full_guide_coefficients(L: float, lam: float, sigma: float = 0.0,
                            controls: MeshControls | None = None) -> tuple[complex, complex]:
    """Reflection and transmission of the two-sided branch guide, incident from the left."""
    _require_monomode(lam)
    result = scattering_matrix(build_branch_guide(L, lam, sigma), 0.0, lam, controls)
    return complex(result.S[0, 0]), complex(result.transmission[TRUNCATION][0, 0])


# ---------------------------------------------------------------- design

@dataclass(eq=False)
class AbsorberDesign:
    spec: GeometrySpec
    lam: float
    eta: float
    S_eta: complex
    sigma: float
    kappa: int
    k_offset: int = 0
    ligament_width: float | None = None
    controls: MeshControls = field(default_factory=MeshControls)
    L_grid: np.ndarray = field(default_factory=lambda: np.empty(0))
    R_samples: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=complex))
    best_L: float | None = None
    best_abs_R: float | None = None

    @property
    def alpha(self) -> float:
        return float(abs(self.S_eta))

    @property
    def beta(self) -> float:
        return float(np.mod(np.angle(self.S_eta), 2.0 * np.pi))

    def geometry(self, L: float) -> Geometry:
        return build_absorber_domain(self.spec, self.sigma, self.kappa, L, self.lam, self.ligament_width)

    def reflection(self, L: float) -> complex:
        return complex(scattering_matrix(self.geometry(L), self.eta, self.lam, self.controls).S[0, 0])

    def report(self) -> AbsorberReport:
        return AbsorberReport(
            lam=self.lam, eta=self.eta, S_eta=ComplexMatrix.from_array(self.S_eta),
            alpha=self.alpha, beta=self.beta, sigma=self.sigma, kappa=self.kappa,
            k_offset=self.k_offset, separation_bound=separation_check(self),
            ligament_width=self.ligament_width,
            samples=[LSample(L=float(L), R=ComplexMatrix.from_array(R))
                     for L, R in zip(self.L_grid, self.R_samples)],
            best_L=self.best_L, best_abs_R=self.best_abs_R,
            dip_width=dip_width(self) if len(self.L_grid) else None)


def separation_check(design: AbsorberDesign) -> float:
    gap = _branch_gap(design.spec, design.sigma, design.kappa, design.lam, design.ligament_width)
    bound = evanescent_coupling_bound(design.lam, gap)
    if bound > settings.SEPARATION_TOL:
        logger.warning(f"Branch gap {gap:.3g} leaves an evanescent coupling bound {bound:.2e} "
                       f"above {settings.SEPARATION_TOL:g}; increase kappa")
    return bound


def default_l_grid(lam: float, h: float | None = None) -> np.ndarray:
    """Two periods pi/sqrt(lambda) sampled at L_POINTS_PER_PERIOD.

    The grid starts at the shallowest branch a mesh of size h can resolve;
    R is periodic in L, so two periods from there cover every dip.
    """
    h = settings.MESH_H if h is None else h
    period = np.pi / np.sqrt(lam)
    n = 2 * settings.L_POINTS_PER_PERIOD
    return 1.0 + SHALLOWEST_BRANCH_CELLS * h + period * np.arange(n) / settings.L_POINTS_PER_PERIOD


def ligament_l_grid(lam: float, points: int | None = None, modes: int = 2) -> np.ndarray:
    """Lengths within 10% of the resonances pi (m + 1/2)/sqrt(lambda), as L = 1 + length."""
    points = points or settings.L_POINTS_PER_PERIOD // 2
    grids = [1.0 + np.linspace(0.9, 1.1, points) * np.pi * (m + 0.5) / np.sqrt(lam) for m in range(modes)]
    return np.concatenate(grids)


def _l_job(job) -> complex:
    design, L = job
    return design.reflection(L)


def l_sweep(design: AbsorberDesign, L_grid, workers: int | None = None) -> AbsorberDesign:
    """Sample R^kappa(L), then refine the deepest dip of -ln|R| to L_TOL."""
    grid = np.sort(np.asarray(L_grid, dtype=float))
    if not len(grid):
        raise ConfigError("empty L grid")
    samples = np.array(ordered_map(_l_job, [(design, L) for L in grid], workers), dtype=complex)
    design.L_grid, design.R_samples = grid, samples

    abs_r = np.abs(samples)
    i = int(np.argmin(abs_r))
    best_L, best = float(grid[i]), float(abs_r[i])
    if 0 < i < len(grid) - 1:
        found = minimize_scalar(lambda L: abs(design.reflection(float(L))),
                                bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                                options={"xatol": settings.L_TOL})
        if found.fun < best:
            best_L, best = float(found.x), float(found.fun)
    else:
        logger.warning(f"Deepest |R| sample at the L-grid end (L={best_L:.5g}); not refined")
    design.best_L, design.best_abs_R = best_L, best
    logger.info(f"Best L*={best_L:.6f} with |R|={best:.3e} (-ln|R|={-np.log(max(best, 1e-300)):.3f})")
    return design


def dip_width(design: AbsorberDesign, level: float = 0.5) -> float:
    """Width in L of the region around the deepest sample where |R| < level."""
    if not len(design.L_grid):
        raise ConfigError("design has no L samples")
    L, abs_r = design.L_grid, np.abs(design.R_samples)
    i = int(np.argmin(abs_r))
    if abs_r[i] >= level:
        return 0.0

    def crossing(step: int) -> float:
        k = i
        while 0 <= k + step < len(L) and abs_r[k + step] < level:
            k += step
        if not 0 <= k + step < len(L):
            logger.warning("Dip extends past the L grid; width is a lower bound")
            return float(L[k])
        a, b = abs_r[k], abs_r[k + step]
        return float(L[k] + (level - a) / (b - a) * (L[k + step] - L[k]))

    return crossing(1) - crossing(-1)


def design_absorber(spec: GeometrySpec, lam: float, eta: float, controls: MeshControls | None = None,
                    kappa: int | None = None, k_offset: int = 0, L_grid=None,
                    ligament_width: float | None = None, workers: int | None = None) -> AbsorberDesign:
    _require_monomode(lam)
    controls = controls or MeshControls()
    base = build_waveguide(spec, lam)
    S_eta = complex(scattering_matrix(base, eta, lam, controls).S[0, 0])
    sigma = sigma_for_target(S_eta, lam, k_offset)
    if kappa is None:
        kappa = choose_kappa(spec, sigma, lam, ligament_width=ligament_width)
    logger.info(f"S^eta={S_eta:.6f}: sigma={sigma:.6f}, kappa={kappa}")

    design = AbsorberDesign(spec=spec, lam=float(lam), eta=float(eta), S_eta=S_eta, sigma=sigma,
                            kappa=kappa, k_offset=k_offset, ligament_width=ligament_width,
                            controls=controls)
    separation_check(design)
    if L_grid is None:
        L_grid = ligament_l_grid(lam) if ligament_width is not None else default_l_grid(lam, controls.h)
    return l_sweep(design, L_grid, workers)
