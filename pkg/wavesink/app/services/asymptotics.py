"""Small- and large-dissipation models of the scattering matrix.

Small eta:  S ~ S0 - lam eta B0 S0.
Large eta:  S ~ S_inf + eta^(-1/2) S',  S' = ((-1 + i) / sqrt(2 lam)) E S_inf,
where S_inf comes from the sound-soft obstacle problem and
E_jk = int_{dO} b^(-1/2) d_n u_j d_n conj(u_k) ds.
Inside the inclusion the large-eta field is a boundary layer of depth
~ (lam b eta)^(-1/2) driven by the sound-soft fluxes.
"""
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from app.core.errors import CollarChartError, ConfigError, NonSmoothInclusionError
from app.schemas.results import ComplexMatrix, LargeEtaRecord, RateRow, RateStudyReport, SmallEtaRecord
from app.services.fem import DIRICHLET_ON_INCLUSION, BoundaryFlux, Field, boundary_flux, edge_mass, mass_matrix
from app.services.geometry import INCLUSION, INTERFACE, DissipationProfile, Geometry
from app.services.mesh import Mesh, MeshControls, skin_depth
from app.services.scattering import ScatteringResult, ScatteringSolver, eta_sweep

logger = logging.getLogger(__name__)


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log y against log x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y) or len(x) < 2:
        raise ConfigError("slope fit needs at least two (x, y) pairs")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ConfigError("slope fit needs positive data")
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


# ---------------------------------------------------------------- small eta

@dataclass(eq=False)
class SmallEtaModel:
    lam: float
    S0: np.ndarray
    B0: np.ndarray
    result: ScatteringResult | None = None

    def predict(self, eta: float) -> np.ndarray:
        return self.S0 - self.lam * eta * self.B0 @ self.S0

    def record(self) -> SmallEtaRecord:
        return SmallEtaRecord(lam=self.lam, S0=ComplexMatrix.from_array(self.S0),
                              B0=ComplexMatrix.from_array(self.B0))


def small_eta_model(geometry: Geometry, lam: float, controls: MeshControls | None = None) -> SmallEtaModel:
    result = ScatteringSolver(geometry, lam, controls).solve(0.0)
    logger.info(f"Small-eta model: unitarity defect {result.energy_residual:.2e}")
    return SmallEtaModel(lam=result.lam, S0=result.S, B0=result.B, result=result)


# ---------------------------------------------------------------- large eta

class BoundaryLayerProfile:
    """E(t, b) = -(1 + i) / sqrt(2 lam b) exp(((-1 + i) / sqrt 2) sqrt(lam b) t), dE/dt(0) = 1."""

    def __init__(self, lam: float):
        self.lam = float(lam)

    def _rate(self, b) -> np.ndarray:
        return (-1.0 + 1j) / np.sqrt(2.0) * np.sqrt(self.lam * np.asarray(b, dtype=float))

    def __call__(self, t, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        return -(1.0 + 1j) / np.sqrt(2.0 * self.lam * b) * np.exp(self._rate(b) * np.asarray(t))

    def derivative(self, t, b) -> np.ndarray:
        return self._rate(b) * self(t, b)


@dataclass(eq=False)
class LargeEtaModel:
    lam: float
    S_inf: np.ndarray
    E: np.ndarray
    fields: list[Field]
    fluxes: list[BoundaryFlux]
    geometry: Geometry
    profile: BoundaryLayerProfile = field(init=False)

    def __post_init__(self):
        self.profile = BoundaryLayerProfile(self.lam)

    @property
    def S_prime(self) -> np.ndarray:
        return (-1.0 + 1j) / np.sqrt(2.0 * self.lam) * self.E @ self.S_inf

    def predict(self, eta: float) -> np.ndarray:
        return self.S_inf + eta ** -0.5 * self.S_prime

    @property
    def prefactor_defect(self) -> float:
        """Frobenius norm of i S' conj(S_inf)^T + ((1 + i) / sqrt(2 lam)) E."""
        lhs = 1j * self.S_prime @ self.S_inf.conj().T
        return float(np.linalg.norm(lhs + (1.0 + 1j) / np.sqrt(2.0 * self.lam) * self.E))

    def record(self) -> LargeEtaRecord:
        return LargeEtaRecord(lam=self.lam, S_inf=ComplexMatrix.from_array(self.S_inf),
                              E=ComplexMatrix.from_array(self.E),
                              S_prime=ComplexMatrix.from_array(self.S_prime),
                              prefactor_defect=self.prefactor_defect)


def flux_gram(fluxes: list[BoundaryFlux], profile: DissipationProfile) -> np.ndarray:
    """E_jk = int b^(-1/2) flux_j conj(flux_k), Hermitian by symmetrization."""
    first = fluxes[0]
    local = np.searchsorted(first.dofs, first.edge_dofs)
    weighted = edge_mass(first.nodes, local, len(first.dofs), weight=lambda z, y: profile(z, y) ** -0.5)
    F = np.column_stack([f.coefficients for f in fluxes])
    E = F.T @ (weighted @ F.conj())
    return 0.5 * (E + E.conj().T)


def _require_smooth(geometry: Geometry) -> None:
    inclusion = geometry.inclusion
    if inclusion is None:
        raise ConfigError("large-eta model needs an inclusion")
    if not inclusion.smooth:
        raise NonSmoothInclusionError(
            f"{inclusion.shape} inclusion has corners: the boundary-layer expansion needs a smooth interface")


def large_eta_model(geometry: Geometry, lam: float, controls: MeshControls | None = None) -> LargeEtaModel:
    _require_smooth(geometry)
    solver = ScatteringSolver(geometry, lam, controls, bc=DIRICHLET_ON_INCLUSION)
    result = solver.solve(0.0)
    fluxes = [boundary_flux(f, INTERFACE) for f in result.fields]
    E = flux_gram(fluxes, geometry.inclusion.profile)
    model = LargeEtaModel(lam=result.lam, S_inf=result.S, E=E, fields=result.fields,
                          fluxes=fluxes, geometry=geometry)
    logger.info(f"Large-eta model: unitarity defect {result.energy_residual:.2e}, "
                f"prefactor defect {model.prefactor_defect:.2e}")
    return model


def _smoothstep(x: np.ndarray) -> np.ndarray:
    """C-infinity step from 0 (x <= 0) to 1 (x >= 1)."""
    x = np.clip(x, 0.0, 1.0)

    def f(v):
        return np.where(v > 0, np.exp(-1.0 / np.where(v > 0, v, 1.0)), 0.0)

    return f(x) / (f(x) + f(1.0 - x))


def reconstruct_interior(model: LargeEtaModel, eta: float, mesh: Mesh, j: int = 0) -> Field:
    """Boundary-layer field eta^(-1/2) chi(n) E(sqrt(eta) n, b(s)) flux_j(s) on the inclusion dofs.

    chi is 1 up to depth d0 and vanishes beyond 2 d0, with d0 the collar
    width of the interface curve.
    """
    if not eta > 0:
        raise ConfigError("reconstruction needs eta > 0")
    if not 0 <= j < len(model.fluxes):
        raise ConfigError(f"no incident mode {j}")
    geometry = mesh.geometry
    if geometry is None or geometry.inclusion is None:
        raise ConfigError("reconstruction needs a mesh with an inclusion")
    _require_smooth(geometry)
    if mesh.grading.layer_unresolved:
        logger.warning("Reconstructing on a layer-unresolved mesh; interior accuracy is not claimed")

    curve = geometry.inclusion.curve
    dofs = np.unique(mesh.triangle_dofs[mesh.region_mask(INCLUSION)])
    points = mesh.dof_coordinates[dofs]
    foot, depth = curve.project(points)
    scale = max(1.0, float(np.max(np.abs(points))))
    if np.any(depth < -1e-8 * scale):
        raise CollarChartError("inclusion dofs fall outside the interface chart of the model geometry")
    depth = np.clip(depth, 0.0, None)

    b_max = float(np.max(geometry.inclusion.boundary_dissipation()))
    logger.debug(f"Reconstructing u_{j} at eta={eta:.3g}: skin depth {skin_depth(model.lam, b_max, eta):.3g}")
    d0 = curve.collar_width
    chi = 1.0 - _smoothstep((depth - d0) / d0)
    active = chi > 0
    b = geometry.inclusion.profile(foot[:, 0], foot[:, 1])
    values = np.zeros(mesh.n_dofs, dtype=complex)
    layer = np.zeros(len(dofs), dtype=complex)
    layer[active] = (eta ** -0.5 * chi[active]
                     * model.profile(np.sqrt(eta) * depth[active], b[active])
                     * model.fluxes[j].evaluate(foot[active]))
    values[dofs] = layer
    return Field(values, mesh, model.fields[j].basis, j, eta)


def interior_relative_error(field_fem: Field, reconstruction: Field) -> float:
    """||u - u_hat||_{L2(O)} / ||u||_{L2(O)} on the mesh of the direct solve."""
    mesh = field_fem.mesh
    if reconstruction.mesh is not mesh:
        raise ConfigError("comparison needs both fields on the same mesh")
    mass = mass_matrix(mesh, mesh.region_mask(INCLUSION))
    diff = field_fem.values - reconstruction.values
    num = np.real(np.conj(diff) @ (mass @ diff))
    den = np.real(np.conj(field_fem.values) @ (mass @ field_fem.values))
    return float(np.sqrt(num / den))


# ---------------------------------------------------------------- rate studies

@dataclass(frozen=True)
class DecayTable:
    etas: np.ndarray
    norms: np.ndarray
    slope: float | None


def interior_decay_norm(geometry: Geometry, lam: float, etas: Sequence[float],
                        controls: MeshControls | None = None, j: int = 0,
                        workers: int | None = None) -> DecayTable:
    """||u_j^eta||_{L2(O)} per eta and the log-log slope over the positive etas."""
    if geometry.inclusion is None:
        raise ConfigError("interior norms need an inclusion")
    records = eta_sweep(geometry, lam, etas, controls, workers=workers)
    grid = np.array([r.eta for r in records])
    norms = np.array([r.inclusion_l2_norms[j] for r in records])
    positive = grid > 0
    slope = fit_loglog_slope(grid[positive], norms[positive]) if positive.sum() >= 2 else None
    return DecayTable(grid, norms, slope)


def rate_study(geometry: Geometry, lam: float, etas: Sequence[float], regime: str = "large",
               controls: MeshControls | None = None, workers: int | None = None,
               model: SmallEtaModel | LargeEtaModel | None = None) -> RateStudyReport:
    """Defects of the zeroth- and first-order models against direct solves.

    Rows carry defect0 = ||S - S_limit||, defect1 = ||S - predictor|| and the
    inclusion norm of u_0, with slopes fitted over every row.
    """
    if regime == "small":
        model = model or small_eta_model(geometry, lam, controls)
        limit = model.S0
    elif regime == "large":
        model = model or large_eta_model(geometry, lam, controls)
        limit = model.S_inf
    else:
        raise ConfigError(f"regime must be 'small' or 'large', got {regime!r}")

    records = eta_sweep(geometry, lam, etas, controls, workers=workers)
    rows = []
    for record in records:
        S = record.S.to_array()
        rows.append(RateRow(eta=record.eta,
                            defect0=float(np.linalg.norm(S - limit)),
                            defect1=float(np.linalg.norm(S - model.predict(record.eta))),
                            interior_l2=record.inclusion_l2_norms[0]))
        if record.layer_unresolved:
            logger.warning(f"eta={record.eta:.3g} ran on a layer-unresolved mesh")

    report = RateStudyReport(lam=float(lam), rows=rows)
    usable = [r for r in rows if r.eta > 0]
    if len(usable) >= 2:
        x = [r.eta for r in usable]
        report.slope_defect0 = fit_loglog_slope(x, [r.defect0 for r in usable])
        report.slope_defect1 = fit_loglog_slope(x, [r.defect1 for r in usable])
        report.slope_interior = fit_loglog_slope(x, [r.interior_l2 for r in usable])
        logger.info(f"{regime}-eta slopes: defect0 {report.slope_defect0:.3f}, "
                    f"defect1 {report.slope_defect1:.3f}, interior {report.slope_interior:.3f}")
    return report
