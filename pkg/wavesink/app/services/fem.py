"""P2 finite elements for the dissipative Helmholtz problem.

The discrete system is

    A = K - lam M - i lam eta M_b - D

assembled with the non-conjugated pairing, so A is complex symmetric.
D is the modal Dirichlet-to-Neumann term on every port and the incident
wave enters as a load on the first port (total-field formulation).
Elements are isoparametric: interface midpoints sit on the exact curve.
"""
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss
from scipy.sparse.linalg import LinearOperator, onenormest, splu, spsolve
from scipy.spatial import cKDTree

from app.core.config import settings
from app.core.errors import ConfigError, MeshError, SolverError
from app.services.geometry import EXTERIOR, INCLUSION, INTERFACE, Port
from app.services.mesh import Mesh
from app.services.modes import ModeBasis

logger = logging.getLogger(__name__)

# 7-point degree-5 rule on the reference triangle (barycentric points)
_A1, _B1, _W1 = 0.059715871789770, 0.470142064105115, 0.132394152788506
_A2, _B2, _W2 = 0.797426985353087, 0.101286507323456, 0.125939180544827
_BARY = np.array([[1 / 3, 1 / 3, 1 / 3],
                  [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
                  [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2]])
QUAD_WEIGHTS = 0.5 * np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2])

CHUNK = 20000


def p2_shape(xi: np.ndarray, eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reference P2 basis (vertices 0-2, midpoints of 01, 12, 20) and its gradients."""
    l0, l1, l2 = 1.0 - xi - eta, xi, eta
    n = np.stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                  4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0], axis=-1)
    zero = np.zeros_like(xi)
    dxi = np.stack([-(4 * l0 - 1), 4 * l1 - 1, zero, 4 * (l0 - l1), 4 * l2, -4 * l2], axis=-1)
    deta = np.stack([-(4 * l0 - 1), zero, 4 * l2 - 1, -4 * l1, 4 * l1, 4 * (l0 - l2)], axis=-1)
    return n, np.stack([dxi, deta], axis=-1)


_N, _DN = p2_shape(_BARY[:, 1], _BARY[:, 2])


def edge_shape(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """1D P2 basis on [0, 1] for (start, midpoint, end) and its derivative."""
    n = np.stack([(1 - t) * (1 - 2 * t), 4 * t * (1 - t), t * (2 * t - 1)], axis=-1)
    dn = np.stack([4 * t - 3, 4 - 8 * t, 4 * t - 1], axis=-1)
    return n, dn


def edge_rule(n_points: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(n_points or settings.EDGE_QUADRATURE_POINTS)
    return 0.5 * (x + 1.0), 0.5 * w


# ---------------------------------------------------------------- volume terms

def _element_quadrature(nodes: np.ndarray):
    jac = np.einsum("eic,qid->eqcd", nodes, _DN)
    det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
    if np.any(det <= 0):
        raise MeshError("inverted or degenerate curved element")
    inv = np.empty_like(jac)
    inv[..., 0, 0] = jac[..., 1, 1] / det
    inv[..., 0, 1] = -jac[..., 0, 1] / det
    inv[..., 1, 0] = -jac[..., 1, 0] / det
    inv[..., 1, 1] = jac[..., 0, 0] / det
    grads = np.einsum("eqdc,qid->eqic", inv, _DN)
    points = np.einsum("eic,qi->eqc", nodes, _N)
    return det * QUAD_WEIGHTS, grads, points


def _assemble_volume(mesh: Mesh, mask: np.ndarray, local: Callable) -> sp.csr_matrix:
    n = mesh.n_dofs
    result = sp.csr_matrix((n, n))
    idx = np.flatnonzero(mask)
    coords = mesh.dof_coordinates
    for chunk in np.array_split(idx, max(1, int(np.ceil(len(idx) / CHUNK)))):
        if not len(chunk):
            continue
        dofs = mesh.triangle_dofs[chunk]
        wdet, grads, points = _element_quadrature(coords[dofs])
        values = local(wdet, grads, points)
        rows = np.broadcast_to(dofs[:, :, None], values.shape)
        cols = np.broadcast_to(dofs[:, None, :], values.shape)
        result = result + sp.coo_matrix((values.ravel(), (rows.ravel(), cols.ravel())),
                                        shape=(n, n)).tocsr()
    return result


def stiffness_matrix(mesh: Mesh, mask: np.ndarray | None = None) -> sp.csr_matrix:
    mask = np.ones(len(mesh.triangles), dtype=bool) if mask is None else mask
    return _assemble_volume(mesh, mask,
                            lambda w, g, x: np.einsum("eq,eqic,eqjc->eij", w, g, g))


def mass_matrix(mesh: Mesh, mask: np.ndarray | None = None,
                weight: Callable | None = None) -> sp.csr_matrix:
    """Mass matrix over masked triangles; `weight(z, y)` multiplies the integrand."""
    mask = np.ones(len(mesh.triangles), dtype=bool) if mask is None else mask

    def local(w, g, x):
        if weight is not None:
            w = w * weight(x[..., 0], x[..., 1])
        return np.einsum("eq,qi,qj->eij", w, _N, _N)

    return _assemble_volume(mesh, mask, local)


def load_vector(mesh: Mesh, source: Callable, mask: np.ndarray | None = None) -> np.ndarray:
    """Vector of int f v_i over masked triangles."""
    mask = np.ones(len(mesh.triangles), dtype=bool) if mask is None else mask
    idx = np.flatnonzero(mask)
    dofs = mesh.triangle_dofs[idx]
    wdet, _, points = _element_quadrature(mesh.dof_coordinates[dofs])
    local = np.einsum("eq,eq,qi->ei", wdet, source(points[..., 0], points[..., 1]), _N)
    out = np.zeros(mesh.n_dofs, dtype=local.dtype)
    np.add.at(out, dofs.ravel(), local.ravel())
    return out


# ---------------------------------------------------------------- ports

@dataclass(frozen=True, eq=False)
class PortProjection:
    """Modal projections c_k[i] = int_port phi_k N_i restricted to the port dofs."""

    port: Port
    dofs: np.ndarray
    matrix: np.ndarray

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        return self.matrix @ values[self.dofs]


def port_projection(mesh: Mesh, basis: ModeBasis, port: Port,
                    n_points: int | None = None) -> PortProjection:
    edge_dofs = mesh.edge_dofs(port.tag)
    if not len(edge_dofs):
        raise ConfigError(f"mesh has no edges tagged {port.tag!r}")
    start = mesh.vertices[edge_dofs[:, 0]]
    end = mesh.vertices[edge_dofs[:, 2]]
    if not np.allclose(np.r_[start[:, 0], end[:, 0]], port.z, rtol=0, atol=1e-12):
        raise ConfigError(f"edges tagged {port.tag!r} are not on the line z={port.z}")

    t, w = edge_rule(n_points)
    shape, _ = edge_shape(t)
    y = start[:, 1:2] + t[None, :] * (end[:, 1:2] - start[:, 1:2])
    length = np.abs(end[:, 1] - start[:, 1])
    phi = basis.phi_all(y.ravel()).reshape(basis.n_terms, *y.shape)
    local = np.einsum("nkq,q,qs,k->nks", phi, w, shape, length)

    dofs, inverse = np.unique(edge_dofs, return_inverse=True)
    matrix = np.zeros((basis.n_terms, len(dofs)))
    np.add.at(matrix.T, np.asarray(inverse).ravel(), local.reshape(basis.n_terms, -1).T)
    return PortProjection(port, dofs, matrix)


def incident_amplitudes(basis: ModeBasis, port: Port) -> np.ndarray:
    """Trace amplitudes (2 alpha_j)^(-1/2) exp(-i alpha_j d z_p) of the incoming waves."""
    a = basis.alpha
    return (2.0 * a) ** -0.5 * np.exp(-1j * a * port.direction * port.z)


# ---------------------------------------------------------------- systems

@dataclass(frozen=True)
class BoundaryCondition:
    kind: str = "neumann_all"
    tag: str | None = None


NEUMANN_ALL = BoundaryCondition()
DIRICHLET_ON_INCLUSION = BoundaryCondition("dirichlet_on_inclusion")


def dirichlet_on(tag: str) -> BoundaryCondition:
    return BoundaryCondition("dirichlet_on", tag)


@dataclass(eq=False)
class AssembledSystem:
    mesh: Mesh
    basis: ModeBasis
    eta: float
    bc: BoundaryCondition
    full_matrix: sp.csr_matrix
    full_load: np.ndarray
    free: np.ndarray
    dirichlet: np.ndarray
    excluded: np.ndarray
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    weighted_mass: sp.csr_matrix
    dtn: sp.csr_matrix
    inclusion_mass: sp.csr_matrix
    projections: tuple[PortProjection, ...]
    dirichlet_tags: frozenset[str]

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        return self.full_matrix[self.free][:, self.free].tocsr()

    @property
    def load(self) -> np.ndarray:
        return self.full_load[self.free]

    @property
    def dimension(self) -> int:
        return len(self.free)

    @property
    def constrained(self) -> np.ndarray:
        return np.union1d(self.dirichlet, self.excluded)


@dataclass(eq=False)
class SystemBlocks:
    """eta-independent pieces of one discretization; `system(eta)` combines them."""

    mesh: Mesh
    basis: ModeBasis
    bc: BoundaryCondition
    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    weighted_mass: sp.csr_matrix
    inclusion_mass: sp.csr_matrix
    dtn: sp.csr_matrix
    load: np.ndarray
    projections: tuple[PortProjection, ...]
    free: np.ndarray
    dirichlet: np.ndarray
    excluded: np.ndarray
    dirichlet_tags: frozenset[str]

    def system(self, eta: float) -> AssembledSystem:
        if eta < 0:
            raise ConfigError(f"eta must be non-negative, got {eta}")
        lam = self.basis.lam
        matrix = self.stiffness - lam * self.mass - self.dtn
        if eta > 0:
            matrix = matrix - 1j * lam * eta * self.weighted_mass
        return AssembledSystem(
            mesh=self.mesh, basis=self.basis, eta=eta, bc=self.bc,
            full_matrix=sp.csr_matrix(matrix, dtype=complex), full_load=self.load,
            free=self.free, dirichlet=self.dirichlet, excluded=self.excluded,
            stiffness=self.stiffness, mass=self.mass, weighted_mass=self.weighted_mass,
            dtn=self.dtn, inclusion_mass=self.inclusion_mass, projections=self.projections,
            dirichlet_tags=self.dirichlet_tags)


def assemble_blocks(mesh: Mesh, basis: ModeBasis, bc: BoundaryCondition = NEUMANN_ALL) -> SystemBlocks:
    geometry = mesh.geometry
    if geometry is None:
        raise ConfigError("assembly needs a mesh built from a geometry (ports and tags)")
    n = mesh.n_dofs

    active = np.ones(len(mesh.triangles), dtype=bool)
    tags = set(geometry.dirichlet_tags)
    if bc.kind == "dirichlet_on_inclusion":
        if geometry.inclusion is None:
            raise ConfigError("dirichlet_on_inclusion needs an inclusion")
        active = mesh.region_mask(EXTERIOR)
        tags.add(INTERFACE)
    elif bc.kind == "dirichlet_on":
        if bc.tag not in mesh.tags:
            raise ConfigError(f"missing boundary tag {bc.tag!r}")
        tags.add(bc.tag)
    elif bc.kind != "neumann_all":
        raise ConfigError(f"unknown boundary condition {bc.kind!r}")

    active_dofs = np.unique(mesh.triangle_dofs[active])
    dirichlet = np.unique(np.concatenate([mesh.dofs_on(tag) for tag in sorted(tags)])) \
        if tags else np.array([], dtype=int)
    excluded = np.setdiff1d(np.arange(n), active_dofs)
    free = np.setdiff1d(active_dofs, dirichlet)

    stiffness = stiffness_matrix(mesh, active)
    mass = mass_matrix(mesh, active)
    inclusion = geometry.inclusion
    if inclusion is not None:
        inside = active & mesh.region_mask(INCLUSION)
        weighted_mass = mass_matrix(mesh, inside, weight=inclusion.profile)
        inclusion_mass = mass_matrix(mesh, inside)
    else:
        weighted_mass = sp.csr_matrix((n, n))
        inclusion_mass = sp.csr_matrix((n, n))

    projections = tuple(port_projection(mesh, basis, port) for port in geometry.ports)
    mu = basis.dtn_symbols
    dtn = sp.csr_matrix((n, n), dtype=complex)
    for proj in projections:
        block = proj.matrix.T @ (mu[:, None] * proj.matrix)
        rows = np.broadcast_to(proj.dofs[:, None], block.shape)
        cols = np.broadcast_to(proj.dofs[None, :], block.shape)
        dtn = dtn + sp.coo_matrix((block.ravel(), (rows.ravel(), cols.ravel())), shape=(n, n)).tocsr()

    incoming = projections[0]
    gain = -2j * basis.alpha * incident_amplitudes(basis, incoming.port)
    load = np.zeros((n, basis.J), dtype=complex)
    load[incoming.dofs] = (gain[:, None] * incoming.matrix[: basis.J]).T

    logger.info(f"Assembled {n} dofs ({len(free)} free, {len(dirichlet)} Dirichlet, "
                f"{len(excluded)} excluded), bc={bc.kind}")
    return SystemBlocks(mesh=mesh, basis=basis, bc=bc, stiffness=stiffness, mass=mass,
                        weighted_mass=weighted_mass, inclusion_mass=inclusion_mass, dtn=dtn,
                        load=load, projections=projections, free=free, dirichlet=dirichlet,
                        excluded=excluded, dirichlet_tags=frozenset(tags))


def assemble(mesh: Mesh, basis: ModeBasis, eta: float,
             bc: BoundaryCondition = NEUMANN_ALL) -> AssembledSystem:
    return assemble_blocks(mesh, basis, bc).system(eta)


# ---------------------------------------------------------------- solve

@dataclass(eq=False)
class Field:
    values: np.ndarray
    mesh: Mesh
    basis: ModeBasis
    incident: int
    eta: float
    system: AssembledSystem | None = None


def _condition_estimate(matrix: sp.csc_matrix, lu) -> float:
    inverse = LinearOperator(matrix.shape, dtype=complex,
                             matvec=lambda x: lu.solve(np.asarray(x, dtype=complex).ravel()),
                             rmatvec=lambda x: lu.solve(np.asarray(x, dtype=complex).ravel(), trans="H"))
    return float(onenormest(matrix) * onenormest(inverse))


def solve(system: AssembledSystem, check_conditioning: bool | None = None) -> list[Field]:
    """Factor once, solve every incident mode, enforce the residual contract."""
    matrix = system.matrix.tocsc()
    load = system.load
    try:
        lu = splu(matrix)
    except RuntimeError as exc:
        raise SolverError(f"sparse factorization failed: {exc}") from exc
    solution = lu.solve(load)

    residual = np.linalg.norm(matrix @ solution - load, axis=0) / np.linalg.norm(load, axis=0)
    worst = float(residual.max())
    if not np.all(np.isfinite(solution)) or worst > settings.SOLVER_RESIDUAL_TOL:
        raise SolverError(f"solver residual {worst:.3e} above {settings.SOLVER_RESIDUAL_TOL:.1e}",
                          residual=worst)

    if check_conditioning is None:
        check_conditioning = system.eta == 0
    if check_conditioning:
        cond = _condition_estimate(matrix, lu)
        logger.info(f"Condition number estimate {cond:.3e}")
        if cond > settings.CONDITION_LIMIT:
            raise SolverError(f"near-singular system (condition ~{cond:.2e}): lambda is close to a "
                              f"resonance of the truncated problem", residual=worst)

    logger.info(f"Solved {system.dimension} dofs x {load.shape[1]} rhs at eta={system.eta:.4g}, "
                f"max residual {worst:.2e}")
    fields = []
    for j in range(load.shape[1]):
        values = np.zeros(system.mesh.n_dofs, dtype=complex)
        values[system.free] = solution[:, j]
        fields.append(Field(values, system.mesh, system.basis, j, system.eta, system))
    return fields


def inclusion_l2_norm(field: Field) -> float:
    """||u||_{L2(O)} with the quadrature of the weighted mass."""
    if field.system is not None:
        mass = field.system.inclusion_mass
    else:
        mass = mass_matrix(field.mesh, field.mesh.region_mask(INCLUSION))
    u = field.values
    return float(np.sqrt(max(np.real(np.conj(u) @ (mass @ u)), 0.0)))


# ---------------------------------------------------------------- fluxes

@dataclass(eq=False)
class BoundaryFlux:
    """Normal flux recovered as a P2 trace on a tagged boundary.

    The normal is the outward normal of the solved region; on the inclusion
    interface of an exterior solve it points into the inclusion.
    """

    tag: str
    edge_dofs: np.ndarray
    dofs: np.ndarray
    coefficients: np.ndarray
    nodes: np.ndarray

    @cached_property
    def _local(self) -> np.ndarray:
        index = np.searchsorted(self.dofs, self.edge_dofs)
        return self.coefficients[index]

    def quadrature(self, n_points: int | None = None):
        """Points (k, q, 2), arc-length weights (k, q) and flux values (k, q)."""
        t, w = edge_rule(n_points)
        shape, dshape = edge_shape(t)
        points = np.einsum("kic,qi->kqc", self.nodes, shape)
        tangent = np.einsum("kic,qi->kqc", self.nodes, dshape)
        ds = np.linalg.norm(tangent, axis=-1) * w
        values = np.einsum("ki,qi->kq", self._local, shape)
        return points, ds, values

    def samples(self, n_points: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        points, _, values = self.quadrature(n_points)
        return points.reshape(-1, 2), values.ravel()

    @cached_property
    def _tree(self) -> tuple[cKDTree, np.ndarray]:
        t = np.linspace(0.0, 1.0, 9)
        shape, _ = edge_shape(t)
        points = np.einsum("kic,qi->kqc", self.nodes, shape)
        owner = np.repeat(np.arange(len(self.nodes)), len(t))
        return cKDTree(points.reshape(-1, 2)), owner

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Flux at points lying on the boundary curve."""
        tree, owner = self._tree
        _, nearest = tree.query(np.atleast_2d(points))
        edge = owner[nearest]
        a, b = self.nodes[edge, 0], self.nodes[edge, 2]
        d = b - a
        t = np.einsum("ij,ij->i", np.atleast_2d(points) - a, d) / np.einsum("ij,ij->i", d, d)
        shape, _ = edge_shape(np.clip(t, 0.0, 1.0))
        return np.einsum("ki,ki->k", self._local[edge], shape)


def edge_mass(nodes: np.ndarray, local_index: np.ndarray, size: int,
              weight: Callable | None = None, n_points: int | None = None) -> sp.csr_matrix:
    """P2 trace mass on curved edges; `weight(z, y)` multiplies the integrand."""
    t, w = edge_rule(n_points)
    shape, dshape = edge_shape(t)
    tangent = np.einsum("kic,qi->kqc", nodes, dshape)
    ds = np.linalg.norm(tangent, axis=-1) * w
    if weight is not None:
        points = np.einsum("kic,qi->kqc", nodes, shape)
        ds = ds * weight(points[..., 0], points[..., 1])
    local = np.einsum("kq,qi,qj->kij", ds, shape, shape)
    rows = np.broadcast_to(local_index[:, :, None], local.shape)
    cols = np.broadcast_to(local_index[:, None, :], local.shape)
    return sp.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(size, size)).tocsr()


def recover_flux(matrix: sp.spmatrix, load: np.ndarray, values: np.ndarray,
                 mesh: Mesh, tag: str) -> BoundaryFlux:
    """Variational flux recovery: the residual of the full discrete equation,
    tested against the tagged boundary's P2 functions, equals int flux v_i."""
    edge_dofs = mesh.edge_dofs(tag)
    if not len(edge_dofs):
        raise ConfigError(f"mesh has no edges tagged {tag!r}")
    residual = matrix @ values - load
    dofs, inverse = np.unique(edge_dofs, return_inverse=True)
    nodes = mesh.dof_coordinates[edge_dofs]
    gram = edge_mass(nodes, np.asarray(inverse).reshape(-1, 3), len(dofs))
    coefficients = np.atleast_1d(spsolve(gram.tocsc(), residual[dofs]))
    return BoundaryFlux(tag, edge_dofs, dofs, coefficients, nodes)


def boundary_flux(field: Field, tag: str) -> BoundaryFlux:
    system = field.system
    if system is None or tag not in system.dirichlet_tags:
        raise ConfigError(f"flux recovery needs {tag!r} to be Dirichlet-constrained")
    return recover_flux(system.full_matrix, system.full_load[:, field.incident],
                        field.values, field.mesh, tag)
