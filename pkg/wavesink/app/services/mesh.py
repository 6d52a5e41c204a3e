"""Conforming triangulations of waveguide geometries.

Meshes come from Triangle (constrained Delaunay, 30 degree quality bound,
per-region area limits). Boundary tags ride on segment markers and region
tags on regional attributes. P2 data (unique edges, midpoint coordinates
with curved interface midpoints moved onto the exact curve) is derived
lazily on the immutable Mesh. Interface grading refines an existing mesh
in Triangle's refinement mode so no element is ever coarsened.
"""
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import shapely
import triangle

from app.core.config import settings
from app.core.errors import ConfigError, MeshError
from app.services.geometry import (EXTERIOR, INCLUSION, INTERFACE, LIGAMENT, SYMMETRY, TRUNCATION,
                                   TRUNCATION_LEFT, WALL, Geometry)

logger = logging.getLogger(__name__)

# Triangle assigns marker 1 to unmarked boundary segments, so tags start at 2.
MARKERS = {WALL: 2, TRUNCATION: 3, INTERFACE: 4, SYMMETRY: 5, TRUNCATION_LEFT: 6, LIGAMENT: 7}
TAG_BY_MARKER = {marker: tag for tag, marker in MARKERS.items()}
MARKER_PRIORITY = [MARKERS[TRUNCATION], MARKERS[TRUNCATION_LEFT], MARKERS[SYMMETRY],
                   MARKERS[LIGAMENT], MARKERS[WALL], MARKERS[INTERFACE]]

REGION_CODES = {EXTERIOR: 1, INCLUSION: 2}

AREA_FACTOR = 0.55  # keeps the longest edge below 2h at a 30 degree minimum angle
LAYER_AREA_FACTOR = 0.14  # keeps the longest edge below h_layer
QUALITY = "pq30QAa"
REFINE = "rpq30Qa"
MAX_RETRIES = 5
MAX_REFINE_ROUNDS = 30


def skin_depth(lam: float, b0: float, eta: float) -> float:
    """Decay length sqrt(2) / sqrt(lambda b0 eta) of the boundary layer inside the inclusion."""
    return float(np.sqrt(2.0) / np.sqrt(lam * b0 * eta))


@dataclass(frozen=True)
class Grading:
    min_h: float
    skin_layers: int = 0
    d_skin: float | None = None
    h_layer: float | None = None
    layer_unresolved: bool = False


@dataclass(frozen=True)
class MeshControls:
    h: float = field(default_factory=lambda: settings.MESH_H)
    layers_per_skin: int = field(default_factory=lambda: settings.LAYERS_PER_SKIN)
    min_h_divisor: float = field(default_factory=lambda: settings.MIN_H_DIVISOR)
    dtn_terms: int = field(default_factory=lambda: settings.DTN_TERMS)
    grade: bool = True

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigError(f"mesh size must be positive, got {self.h}")
        if self.layers_per_skin < 1:
            raise ConfigError("layers_per_skin must be at least 1")


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    triangles: np.ndarray
    regions: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    target_h: float
    grading: Grading
    geometry: Geometry | None = None

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_dofs(self) -> int:
        return self.n_vertices + self.n_edges

    @property
    def tags(self) -> frozenset[str]:
        return frozenset(self.boundary_tags.tolist())

    @cached_property
    def _edge_data(self) -> tuple[np.ndarray, np.ndarray]:
        local = self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
        keys = np.sort(local, axis=1)
        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        return edges, np.asarray(inverse).reshape(len(self.triangles), 3)

    @property
    def edges(self) -> np.ndarray:
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """Edge ids of local edges (v0 v1), (v1 v2), (v2 v0)."""
        return self._edge_data[1]

    @cached_property
    def triangle_dofs(self) -> np.ndarray:
        """P2 dofs per triangle: three vertices then the three edge midpoints."""
        return np.hstack([self.triangles, self.n_vertices + self.triangle_edges])

    @cached_property
    def edge_lookup(self) -> dict[tuple[int, int], int]:
        return {(int(a), int(b)): i for i, (a, b) in enumerate(self.edges)}

    @cached_property
    def boundary_edge_ids(self) -> np.ndarray:
        keys = np.sort(self.boundary_edges, axis=1)
        try:
            return np.array([self.edge_lookup[(int(a), int(b))] for a, b in keys], dtype=int)
        except KeyError as exc:
            raise MeshError(f"tagged edge {exc} is not an edge of the triangulation") from exc

    @cached_property
    def midpoints(self) -> np.ndarray:
        mid = 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])
        inclusion = self.geometry.inclusion if self.geometry is not None else None
        if inclusion is not None and inclusion.curved:
            ids = self.tagged_edge_ids(INTERFACE)
            if len(ids):
                mid[ids] = inclusion.curve.project(mid[ids])[0]
        return mid

    @property
    def dof_coordinates(self) -> np.ndarray:
        return np.vstack([self.vertices, self.midpoints])

    def region_mask(self, region: str) -> np.ndarray:
        return self.regions == REGION_CODES[region]

    def tagged_edges(self, tag: str) -> np.ndarray:
        return self.boundary_edges[self.boundary_tags == tag]

    def tagged_edge_ids(self, tag: str) -> np.ndarray:
        return self.boundary_edge_ids[self.boundary_tags == tag]

    def edge_dofs(self, tag: str) -> np.ndarray:
        """(k, 3) dofs of the tagged edges ordered (start, midpoint, end)."""
        edges = self.tagged_edges(tag)
        mids = self.n_vertices + self.tagged_edge_ids(tag)
        return np.column_stack([edges[:, 0], mids, edges[:, 1]])

    def dofs_on(self, tag: str) -> np.ndarray:
        return np.unique(self.edge_dofs(tag))

    def edge_lengths(self) -> np.ndarray:
        p = self.vertices
        return np.linalg.norm(p[self.edges[:, 0]] - p[self.edges[:, 1]], axis=1)

    def signed_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                      - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    def check_invariants(self) -> None:
        if np.any(self.signed_areas() <= 0):
            raise MeshError("mesh has non-positively oriented triangles")
        owners = np.zeros(self.n_edges, dtype=int)
        np.add.at(owners, self.triangle_edges.ravel(), 1)
        if np.any(owners > 2):
            raise MeshError("non-manifold edge in triangulation")
        outer = self.boundary_tags != INTERFACE
        if np.any(owners[self.boundary_edge_ids[outer]] != 1):
            raise MeshError("boundary edge shared by more than one triangle")
        hull = np.flatnonzero(owners == 1)
        if not np.all(np.isin(hull, self.boundary_edge_ids[outer])):
            raise MeshError("untagged boundary edge (hanging node or gap in the boundary)")
        interface = self.boundary_edge_ids[~outer]
        if len(interface):
            if np.any(owners[interface] != 2):
                raise MeshError("interface edge on the domain boundary")
            flat = self.triangle_edges.ravel()
            order = np.argsort(flat, kind="stable")
            first = np.searchsorted(flat[order], interface)
            left = self.regions[order[first] // 3]
            right = self.regions[order[first + 1] // 3]
            if np.any(left == right):
                raise MeshError("interface edge does not separate inclusion from exterior")


# ---------------------------------------------------------------- PSLG

class _PSLG:
    """Planar straight-line graph with exact vertex reuse."""

    def __init__(self):
        self.points: list[tuple[float, float]] = []
        self.index: dict[tuple[float, float], int] = {}
        self.segments: dict[tuple[int, int], int] = {}

    def vertex(self, p) -> int:
        key = (round(float(p[0]), 12), round(float(p[1]), 12))
        if key not in self.index:
            self.index[key] = len(self.points)
            self.points.append((float(p[0]), float(p[1])))
        return self.index[key]

    def add_segment(self, a: int, b: int, marker: int) -> None:
        if a == b:
            return
        key = (min(a, b), max(a, b))
        old = self.segments.get(key)
        if old is None or MARKER_PRIORITY.index(marker) < MARKER_PRIORITY.index(old):
            self.segments[key] = marker

    def polyline(self, points, marker: int, spacing: float) -> list[int]:
        points = np.asarray(points, dtype=float)
        ids = [self.vertex(points[0])]
        for p, q in zip(points[:-1], points[1:]):
            n = max(1, int(np.ceil(np.linalg.norm(q - p) / spacing - 1e-9)))
            for k in range(1, n + 1):
                point = q if k == n else p + (q - p) * (k / n)
                ids.append(self.vertex(point))
                self.add_segment(ids[-2], ids[-1], marker)
        return ids

    def as_dict(self) -> dict:
        keys = list(self.segments)
        return {
            "vertices": np.asarray(self.points, dtype=float),
            "segments": np.asarray(keys, dtype=np.int32),
            "segment_markers": np.asarray([self.segments[k] for k in keys], dtype=np.int32)[:, None],
        }


def _parts(shape):
    if shape.is_empty:
        return []
    return list(getattr(shape, "geoms", [shape]))


def _seeds(shape, attribute: int, area: float, min_area: float) -> list[list[float]]:
    seeds = []
    for part in _parts(shape):
        if part.geom_type == "Polygon" and part.area > min_area:
            p = part.representative_point()
            seeds.append([p.x, p.y, float(attribute), area])
    return seeds


def _build(geometry: Geometry, h: float, area_scale: float) -> dict:
    pslg = _PSLG()
    for seg in geometry.segments:
        pslg.polyline([seg.start, seg.end], MARKERS[seg.tag], h)

    inclusion = geometry.inclusion
    a_base = AREA_FACTOR * h * h * area_scale
    min_area = 1e-4 * h * h
    if inclusion is None:
        regions = _seeds(geometry.domain, REGION_CODES[EXTERIOR], a_base, min_area)
        return {**pslg.as_dict(), "regions": np.asarray(regions, dtype=float)}

    for line in inclusion.interface_polylines(h):
        pslg.polyline(line, MARKERS[INTERFACE], h)
    domain, incl = geometry.domain, inclusion.polygon
    regions = (_seeds(domain.difference(incl), REGION_CODES[EXTERIOR], a_base, min_area)
               + _seeds(incl, REGION_CODES[INCLUSION], a_base, min_area))
    return {**pslg.as_dict(), "regions": np.asarray(regions, dtype=float)}


def _run_triangle(data: dict, switches: str = QUALITY) -> dict:
    try:
        return triangle.triangulate(data, switches)
    except Exception as exc:  # Triangle reports bad input through generic errors
        raise MeshError(f"triangulation failed: {exc}") from exc


def _snap_to_curve(out: dict, geometry: Geometry) -> None:
    inclusion = geometry.inclusion
    if inclusion is None or not inclusion.curved:
        return
    markers = np.asarray(out["segment_markers"]).ravel()
    on_curve = np.unique(np.asarray(out["segments"])[markers == MARKERS[INTERFACE]])
    out["vertices"][on_curve] = inclusion.curve.project(out["vertices"][on_curve])[0]


def _to_mesh(out: dict, geometry: Geometry, h: float, grading: Grading) -> Mesh:
    if "triangle_attributes" not in out:
        raise MeshError("triangulation returned no region attributes")
    out["vertices"] = np.asarray(out["vertices"], dtype=float)
    triangles = np.asarray(out["triangles"], dtype=int)
    regions = np.rint(np.asarray(out["triangle_attributes"])[:, 0]).astype(int)
    if not np.all(np.isin(regions, list(REGION_CODES.values()))):
        raise MeshError("triangles outside every seeded region")

    markers = np.asarray(out["segment_markers"]).ravel()
    if np.any(~np.isin(markers, list(TAG_BY_MARKER))):
        raise MeshError("boundary segment without a tag")
    _snap_to_curve(out, geometry)
    tags = np.array([TAG_BY_MARKER[m] for m in markers])

    mesh = Mesh(vertices=out["vertices"], triangles=triangles, regions=regions,
                boundary_edges=np.asarray(out["segments"], dtype=int), boundary_tags=tags,
                target_h=h, grading=grading, geometry=geometry)
    mesh.check_invariants()
    return mesh


def _triangulate(geometry: Geometry, h: float, grading: Grading) -> Mesh:
    area_scale = 1.0
    for attempt in range(MAX_RETRIES):
        mesh = _to_mesh(_run_triangle(_build(geometry, h, area_scale)), geometry, h, grading)
        longest = mesh.edge_lengths().max()
        if longest <= 2.0 * h:
            logger.info(f"Mesh h={h:.4g}: {mesh.n_vertices} vertices, {len(mesh.triangles)} triangles, "
                        f"{mesh.n_dofs} P2 dofs")
            return mesh
        logger.warning(f"Longest edge {longest:.4g} exceeds 2h; retrying with smaller area limits")
        area_scale *= 0.7
    raise MeshError(f"could not reach edge length <= 2h={2 * h:.4g} after {MAX_RETRIES} attempts")


def triangulate(geometry: Geometry, target_h: float, min_h_divisor: float | None = None) -> Mesh:
    if not target_h > 0:
        raise ConfigError(f"target_h must be positive, got {target_h}")
    narrowest = geometry.narrowest_feature
    if narrowest < 2.0 * target_h:
        raise MeshError(f"feature of width {narrowest:.4g} is thinner than 2*target_h={2 * target_h:.4g}")
    divisor = settings.MIN_H_DIVISOR if min_h_divisor is None else min_h_divisor
    return _triangulate(geometry, target_h, Grading(min_h=target_h / divisor))


def _as_triangle_input(mesh: Mesh) -> dict:
    return {
        "vertices": np.array(mesh.vertices, dtype=float),
        "triangles": np.asarray(mesh.triangles, dtype=np.int32),
        "triangle_attributes": mesh.regions.astype(float)[:, None],
        "segments": np.asarray(mesh.boundary_edges, dtype=np.int32),
        "segment_markers": np.array([MARKERS[t] for t in mesh.boundary_tags], dtype=np.int32)[:, None],
    }


def _refine_collar(mesh: Mesh, depth: float, h_layer: float) -> dict:
    """Split triangles within `depth` of the interface until their area fits h_layer.

    Each round at most quarters a triangle, so interface vertices inserted on
    a chord stay close to the curve they are snapped onto.
    """
    lines = mesh.geometry.inclusion.interface_lines()
    a_layer = LAYER_AREA_FACTOR * h_layer * h_layer
    data = _as_triangle_input(mesh)
    for _ in range(MAX_REFINE_ROUNDS):
        p, t = np.asarray(data["vertices"]), np.asarray(data["triangles"])
        a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
        areas = 0.5 * np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))
        longest = np.max([np.linalg.norm(b - a, axis=1), np.linalg.norm(c - b, axis=1),
                          np.linalg.norm(a - c, axis=1)], axis=0)
        near = shapely.distance(lines, shapely.points((a + b + c) / 3.0)) < depth + longest
        coarse = near & (areas > a_layer)
        if not coarse.any():
            return data
        data["triangle_max_area"] = np.where(coarse, np.maximum(a_layer, 0.25 * areas), -1.0)[:, None]
        out = _run_triangle(data, REFINE)
        if "triangle_attributes" not in out:
            raise MeshError("refinement dropped the region attributes")
        out["vertices"] = np.asarray(out["vertices"], dtype=float)
        _snap_to_curve(out, mesh.geometry)
        data = {key: out[key] for key in ("vertices", "triangles", "triangle_attributes",
                                          "segments", "segment_markers")}
    raise MeshError(f"collar refinement did not reach h_layer={h_layer:.3g} in {MAX_REFINE_ROUNDS} rounds")


def grade_near_interface(mesh: Mesh, eta: float, b0: float, layers_per_skin: int | None = None,
                         *, lam: float) -> Mesh:
    """Refine within one skin depth of the inclusion interface.

    Edges in the collar are kept below d_skin / layers_per_skin. When that
    would go below grading.min_h the floor is used and the mesh is flagged
    layer-unresolved instead of failing. The input mesh is refined, never
    rebuilt, so no element gets coarser.
    """
    if not eta > 0:
        raise ConfigError(f"grading needs eta > 0, got {eta}")
    geometry = mesh.geometry
    if geometry is None or geometry.inclusion is None:
        return mesh
    layers = layers_per_skin or settings.LAYERS_PER_SKIN

    d = skin_depth(lam, b0, eta)
    h_layer = d / layers
    if mesh.target_h <= h_layer:
        return mesh

    unresolved = h_layer < mesh.grading.min_h
    if unresolved:
        logger.warning(f"Skin depth {d:.3g} needs h={h_layer:.3g} below min_h={mesh.grading.min_h:.3g}; "
                       f"mesh flagged layer-unresolved")
        h_layer = mesh.grading.min_h

    previous = mesh.grading
    if previous.h_layer is not None:
        if previous.h_layer <= h_layer and previous.d_skin >= d:
            return mesh
        h_layer = min(h_layer, previous.h_layer)
        d = max(d, previous.d_skin)
        unresolved = unresolved or previous.layer_unresolved

    grading = replace(previous, skin_layers=layers, d_skin=d, h_layer=h_layer,
                      layer_unresolved=unresolved)
    graded = _to_mesh(_refine_collar(mesh, d, h_layer), geometry, mesh.target_h, grading)
    logger.info(f"Graded mesh for eta={eta:.3g}: d_skin={d:.3g}, h_layer={h_layer:.3g}, "
                f"{len(graded.triangles)} triangles")
    return graded


def build_mesh(geometry: Geometry, controls: MeshControls, eta: float = 0.0,
               lam: float | None = None) -> Mesh:
    """Base triangulation, graded for eta when the controls ask for it."""
    mesh = triangulate(geometry, controls.h, controls.min_h_divisor)
    if controls.grade and eta > 0 and geometry.inclusion is not None:
        lam = geometry.lam if lam is None else lam
        b_max = float(np.max(geometry.inclusion.boundary_dissipation()))
        mesh = grade_near_interface(mesh, eta, b_max, controls.layers_per_skin, lam=lam)
    return mesh
