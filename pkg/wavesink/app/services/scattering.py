"""Scattering matrices and their energy, reciprocity and eta-derivative checks."""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from app.core.config import settings
from app.core.errors import ConfigError, ValidationError
from app.schemas.results import ComplexMatrix, ScatteringRecord
from app.services.fem import (NEUMANN_ALL, AssembledSystem, BoundaryCondition, Field, SystemBlocks,
                              assemble_blocks, incident_amplitudes, inclusion_l2_norm, solve)
from app.services.geometry import Geometry, Port
from app.services.mesh import Mesh, MeshControls, grade_near_interface, skin_depth, triangulate
from app.services.modes import ModeBasis, compute_mode_basis
from app.utils.workers import ordered_map

logger = logging.getLogger(__name__)

MAX_CACHED_BLOCKS = 4


@dataclass(eq=False)
class ScatteringResult:
    S: np.ndarray
    eta: float
    lam: float
    fields: list[Field]
    B: np.ndarray
    transmission: dict[str, np.ndarray]
    energy_residual: float
    symmetry_defect: float
    inclusion_norms: np.ndarray

    @property
    def J(self) -> int:
        return self.S.shape[0]

    @property
    def mesh(self) -> Mesh:
        return self.fields[0].mesh

    def record(self) -> ScatteringRecord:
        system = self.fields[0].system
        return ScatteringRecord(
            eta=self.eta, lam=self.lam, J=self.J,
            S=ComplexMatrix.from_array(self.S), B=ComplexMatrix.from_array(self.B),
            transmission={tag: ComplexMatrix.from_array(t) for tag, t in self.transmission.items()},
            energy_residual=self.energy_residual, symmetry_defect=self.symmetry_defect,
            inclusion_l2_norms=[float(x) for x in self.inclusion_norms],
            eigenvalue_moduli=[float(x) for x in eigenvalue_moduli(self)],
            n_dofs=system.dimension if system is not None else self.mesh.n_dofs,
            layer_unresolved=self.mesh.grading.layer_unresolved)


def _port_coefficients(field: Field, basis: ModeBasis, port: Port) -> np.ndarray:
    system = field.system
    if system is None:
        raise ConfigError("coefficient extraction needs the field's assembled system")
    projection = next((p for p in system.projections if p.port.tag == port.tag), None)
    if projection is None:
        raise ConfigError(f"no port projection for {port.tag!r}")
    trace = projection.coefficients(field.values)[: basis.J]
    if projection is system.projections[0]:
        trace = trace.copy()
        trace[field.incident] -= incident_amplitudes(basis, port)[field.incident]
    a = basis.alpha
    return np.sqrt(2.0 * a) * np.exp(-1j * a * port.direction * port.z) * trace


def extract_row(field: Field, basis: ModeBasis, z_T: float | None = None) -> np.ndarray:
    """Outgoing amplitudes s_jk of u_j on the port at z_T (default: the incident port)."""
    geometry = field.mesh.geometry
    if geometry is None:
        raise ConfigError("coefficient extraction needs a mesh built from a geometry")
    port = geometry.ports[0] if z_T is None else geometry.port_at(z_T)
    if port.direction * port.z <= geometry.feature_extent:
        raise ConfigError(f"z_T={port.z:.6g} lies inside the feature region")
    return _port_coefficients(field, basis, port)


def energy_residual(result: ScatteringResult) -> float:
    """Frobenius norm of S S^H + sum T T^H + 2 lambda eta B - I."""
    defect = result.S @ result.S.conj().T + 2.0 * result.lam * result.eta * result.B
    for t in result.transmission.values():
        defect = defect + t @ t.conj().T
    return float(np.linalg.norm(defect - np.eye(result.J)))


def eigenvalue_moduli(result: ScatteringResult) -> np.ndarray:
    return np.sort(np.abs(np.linalg.eigvals(result.S)))[::-1]


def check_record(record: ScatteringRecord) -> ScatteringRecord:
    """Energy, reciprocity and passivity postconditions of one solve."""
    failures = []
    if record.energy_residual > settings.ENERGY_RESIDUAL_TOL:
        failures.append(f"energy residual {record.energy_residual:.2e} > {settings.ENERGY_RESIDUAL_TOL:.0e}")
    if record.symmetry_defect > settings.SYMMETRY_TOL:
        failures.append(f"symmetry defect {record.symmetry_defect:.2e} > {settings.SYMMETRY_TOL:.0e}")
    # |eig S| <= 1 only up to what the energy residual allows
    if record.eigenvalue_moduli and record.eigenvalue_moduli[0] > 1.0 + settings.ENERGY_RESIDUAL_TOL:
        failures.append(f"|eig S| = {record.eigenvalue_moduli[0]:.12g} > 1")
    if failures:
        raise ValidationError(f"eta={record.eta:.6g}: " + "; ".join(failures))
    return record


def build_result(system: AssembledSystem, fields: list[Field]) -> ScatteringResult:
    basis = system.basis
    geometry = system.mesh.geometry
    S = np.array([extract_row(f, basis) for f in fields])
    transmission = {port.tag: np.array([_port_coefficients(f, basis, port) for f in fields])
                    for port in geometry.ports[1:]}

    # B_jk = int b u_j conj(u_k), with the quadrature of M_b
    U = np.column_stack([f.values for f in fields])
    B = U.T @ (system.weighted_mass @ U.conj())
    B = 0.5 * (B + B.conj().T)

    result = ScatteringResult(S=S, eta=system.eta, lam=basis.lam, fields=fields, B=B,
                              transmission=transmission, energy_residual=0.0,
                              symmetry_defect=float(np.max(np.abs(S - S.T))),
                              inclusion_norms=np.array([inclusion_l2_norm(f) for f in fields]))
    result.energy_residual = energy_residual(result)
    logger.info(f"eta={system.eta:.4g}: energy residual {result.energy_residual:.2e}, "
                f"symmetry defect {result.symmetry_defect:.2e}")
    return result


class ScatteringSolver:
    """Scattering solves on one geometry at fixed lambda.

    The eta-independent blocks are cached per mesh, so eta values that share
    a grading level only refactor. Passing `mesh` pins every solve to it.
    """

    def __init__(self, geometry: Geometry, lam: float, controls: MeshControls | None = None,
                 bc: BoundaryCondition = NEUMANN_ALL, mesh: Mesh | None = None):
        self.geometry = geometry
        self.lam = float(lam)
        self.controls = controls or MeshControls()
        self.bc = bc
        self.basis = compute_mode_basis(lam, self.controls.dtn_terms)
        self._fixed_mesh = mesh
        self._base: Mesh | None = None
        self._blocks: dict[float | None, SystemBlocks] = {}

    @property
    def base_mesh(self) -> Mesh:
        if self._fixed_mesh is not None:
            return self._fixed_mesh
        if self._base is None:
            self._base = triangulate(self.geometry, self.controls.h, self.controls.min_h_divisor)
        return self._base

    @property
    def _b_max(self) -> float:
        return float(np.max(self.geometry.inclusion.boundary_dissipation()))

    def _layer_key(self, eta: float) -> float | None:
        if (self._fixed_mesh is not None or not self.controls.grade or eta <= 0
                or self.geometry.inclusion is None or self.bc.kind == "dirichlet_on_inclusion"):
            return None
        base = self.base_mesh
        h_layer = skin_depth(self.lam, self._b_max, eta) / self.controls.layers_per_skin
        if base.target_h <= h_layer:
            return None
        return max(h_layer, base.grading.min_h)

    def blocks(self, eta: float) -> SystemBlocks:
        key = self._layer_key(eta)
        if key not in self._blocks:
            mesh = self.base_mesh
            if key is not None:
                mesh = grade_near_interface(mesh, eta, self._b_max, self.controls.layers_per_skin,
                                            lam=self.lam)
            if len(self._blocks) >= MAX_CACHED_BLOCKS:
                self._blocks.pop(next(iter(self._blocks)))
            self._blocks[key] = assemble_blocks(mesh, self.basis, self.bc)
        return self._blocks[key]

    def solve(self, eta: float, blocks: SystemBlocks | None = None) -> ScatteringResult:
        system = (blocks or self.blocks(eta)).system(eta)
        return build_result(system, solve(system))


def scattering_matrix(geometry: Geometry, eta: float, lam: float,
                      controls: MeshControls | None = None,
                      bc: BoundaryCondition = NEUMANN_ALL) -> ScatteringResult:
    return ScatteringSolver(geometry, lam, controls, bc).solve(eta)


@dataclass(frozen=True)
class DEtaCheck:
    fd: complex
    formula: complex
    rel_err: float


def d_eta_check(geometry: Geometry, eta: float, delta: float, lam: float,
                controls: MeshControls | None = None) -> DEtaCheck:
    """Central difference of S in eta against -lambda int b u^2 (no conjugate)."""
    solver = ScatteringSolver(geometry, lam, controls)
    if solver.basis.J != 1:
        raise ConfigError(f"d_eta_check is monomode only, J={solver.basis.J}")
    if not eta > delta > 0:
        raise ConfigError(f"need eta > delta > 0, got eta={eta}, delta={delta}")

    # one mesh for all three solves so the difference sees no remeshing
    blocks = solver.blocks(eta)
    center = solver.solve(eta, blocks)
    plus = solver.solve(eta + delta, blocks).S[0, 0]
    minus = solver.solve(eta - delta, blocks).S[0, 0]
    fd = (plus - minus) / (2.0 * delta)

    u = center.fields[0].values
    formula = -solver.lam * (u @ (blocks.weighted_mass @ u))
    scale = max(abs(formula), abs(fd))
    rel_err = 0.0 if scale == 0 else float(abs(fd - formula) / scale)
    logger.info(f"d_eta check at eta={eta:.4g}: fd={fd:.6g}, formula={formula:.6g}, rel_err={rel_err:.2e}")
    return DEtaCheck(complex(fd), complex(formula), rel_err)


def _sweep_chunk(job) -> list[ScatteringRecord]:
    geometry, lam, controls, bc, etas = job
    solver = ScatteringSolver(geometry, lam, controls, bc)
    return [solver.solve(eta).record() for eta in etas]


def eta_sweep(geometry: Geometry, lam: float, etas: Sequence[float],
              controls: MeshControls | None = None, bc: BoundaryCondition = NEUMANN_ALL,
              workers: int | None = None) -> list[ScatteringRecord]:
    """Scattering records over an eta grid, sorted by eta whatever the worker count."""
    grid = np.unique(np.asarray(etas, dtype=float))
    if not len(grid):
        raise ConfigError("empty eta grid")
    if np.any(grid < 0):
        raise ConfigError("eta grid must be non-negative")
    workers = settings.WORKERS if workers is None else workers
    n_chunks = max(1, min(workers, len(grid)))
    chunks = [(geometry, lam, controls, bc, chunk.tolist()) for chunk in np.array_split(grid, n_chunks)]
    records = [r for part in ordered_map(_sweep_chunk, chunks, workers) for r in part]
    logger.info(f"Swept {len(records)} eta values")
    return records
