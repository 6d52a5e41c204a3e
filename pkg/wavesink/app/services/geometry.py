"""Parametric waveguide domains.

All coordinates are (z, y): z runs along the guide, y across the unit strip.
A geometry is the union of the strip window, an optional polygonal
resonator and lateral rectangles on the top wall, plus an optional
dissipative inclusion whose interface is kept as an exact curve.
"""
import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from shapely.geometry import MultiLineString, Polygon, box
from shapely.geometry.polygon import orient
from shapely.ops import unary_union

from app.core.config import settings
from app.core.errors import GeometryError
from app.schemas.geometry import DissipationSpec, GeometrySpec, InclusionSpec
from app.services.modes import compute_mode_basis

logger = logging.getLogger(__name__)

# Boundary tags
WALL = "wall"
TRUNCATION = "truncation"
TRUNCATION_LEFT = "truncation_left"
INTERFACE = "inclusion_interface"
SYMMETRY = "symmetry_line"
LIGAMENT = "ligament"

# Region tags
EXTERIOR = "exterior"
INCLUSION = "inclusion"

TOL = 1e-12


class DomainKind(str, Enum):
    FULL_GUIDE = "full_guide"
    HALF_GUIDE_NEUMANN = "half_guide_neumann"
    HALF_GUIDE_MIXED = "half_guide_mixed"


# ---------------------------------------------------------------- curves

@dataclass(frozen=True)
class Circle:
    center: tuple[float, float]
    radius: float

    @property
    def collar_width(self) -> float:
        return 0.5 * self.radius

    def discretize(self, h: float) -> np.ndarray:
        n = max(16, int(np.ceil(2.0 * np.pi * self.radius / h)))
        t = 2.0 * np.pi * np.arange(n) / n
        return np.column_stack([self.center[0] + self.radius * np.cos(t),
                                self.center[1] + self.radius * np.sin(t)])

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest points on the circle and signed depth (positive inside)."""
        c = np.asarray(self.center)
        v = np.atleast_2d(points) - c
        rho = np.hypot(v[:, 0], v[:, 1])
        safe = np.where(rho > 0, rho, 1.0)
        direction = np.where(rho[:, None] > 0, v / safe[:, None], [1.0, 0.0])
        return c + self.radius * direction, self.radius - rho


@dataclass(frozen=True)
class Ellipse:
    center: tuple[float, float]
    semi_axes: tuple[float, float]
    angle: float = 0.0

    @property
    def collar_width(self) -> float:
        # half the smallest radius of curvature, which also bounds the inradius
        a, b = max(self.semi_axes), min(self.semi_axes)
        return 0.5 * b * b / a

    def _rotation(self) -> np.ndarray:
        c, s = np.cos(self.angle), np.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def discretize(self, h: float) -> np.ndarray:
        a0, a1 = self.semi_axes
        n = max(16, int(np.ceil(2.0 * np.pi * max(a0, a1) / h)))
        t = 2.0 * np.pi * np.arange(n) / n
        local = np.column_stack([a0 * np.cos(t), a1 * np.sin(t)])
        return np.asarray(self.center) + local @ self._rotation().T

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest points on the ellipse by a bracketed root solve, and signed depth."""
        rot = self._rotation()
        q = (np.atleast_2d(points) - np.asarray(self.center)) @ rot
        swap = self.semi_axes[0] < self.semi_axes[1]
        e0, e1 = (self.semi_axes[1], self.semi_axes[0]) if swap else self.semi_axes
        if swap:
            q = q[:, ::-1]
        sign = np.where(q < 0, -1.0, 1.0)
        y0, y1 = np.abs(q[:, 0]), np.abs(q[:, 1])
        x0 = np.empty_like(y0)
        x1 = np.empty_like(y1)

        generic = (y1 > 0) & (y0 > 0)
        if generic.any():
            g0, g1 = y0[generic], y1[generic]
            lo = -e1 * e1 + e1 * g1
            hi = -e1 * e1 + np.sqrt((e0 * g0) ** 2 + (e1 * g1) ** 2)
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                f = (e0 * g0 / (mid + e0 * e0)) ** 2 + (e1 * g1 / (mid + e1 * e1)) ** 2 - 1.0
                lo = np.where(f > 0, mid, lo)
                hi = np.where(f > 0, hi, mid)
                if np.all(hi - lo <= TOL * np.maximum(1.0, np.abs(hi))):
                    break
            t = 0.5 * (lo + hi)
            x0[generic] = e0 * e0 * g0 / (t + e0 * e0)
            x1[generic] = e1 * e1 * g1 / (t + e1 * e1)

        on_minor = (y1 > 0) & (y0 == 0)
        x0[on_minor] = 0.0
        x1[on_minor] = e1

        on_major = y1 == 0
        if on_major.any():
            g0 = y0[on_major]
            inner = g0 < (e0 * e0 - e1 * e1) / e0
            m0 = np.where(inner, e0 * e0 * g0 / (e0 * e0 - e1 * e1), e0)
            m1 = np.where(inner, e1 * np.sqrt(np.clip(1.0 - (m0 / e0) ** 2, 0.0, None)), 0.0)
            x0[on_major], x1[on_major] = m0, m1

        foot_local = np.column_stack([x0, x1]) * sign
        distance = np.hypot(foot_local[:, 0] - q[:, 0], foot_local[:, 1] - q[:, 1])
        inside = (q[:, 0] / e0) ** 2 + (q[:, 1] / e1) ** 2 < 1.0
        if swap:
            foot_local = foot_local[:, ::-1]
        foot = np.asarray(self.center) + foot_local @ rot.T
        return foot, np.where(inside, distance, -distance)


@dataclass(frozen=True)
class SlabFaces:
    z1: float
    z2: float

    @property
    def collar_width(self) -> float:
        return 0.25 * (self.z2 - self.z1)

    def project(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = np.atleast_2d(points)
        d1 = p[:, 0] - self.z1
        d2 = self.z2 - p[:, 0]
        near_left = np.abs(d1) <= np.abs(d2)
        foot = np.column_stack([np.where(near_left, self.z1, self.z2), p[:, 1]])
        return foot, np.minimum(d1, d2)


# ---------------------------------------------------------------- features

@dataclass(frozen=True)
class DissipationProfile:
    """b(z, y) = b0 + g_z (z - z_ref) + g_y (y - y_ref) on the inclusion."""

    b0: float
    gradient: tuple[float, float] = (0.0, 0.0)
    reference: tuple[float, float] = (0.0, 0.0)

    @property
    def constant(self) -> bool:
        return self.gradient == (0.0, 0.0)

    def __call__(self, z, y) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        y = np.asarray(y, dtype=float)
        return (self.b0 + self.gradient[0] * (z - self.reference[0])
                + self.gradient[1] * (y - self.reference[1]))

    def scaled(self, factor: float) -> "DissipationProfile":
        return DissipationProfile(self.b0 * factor,
                                  (self.gradient[0] * factor, self.gradient[1] * factor),
                                  self.reference)


@dataclass(frozen=True, eq=False)
class Inclusion:
    shape: str
    polygon: Polygon
    profile: DissipationProfile
    curve: Circle | Ellipse | SlabFaces | None = None

    @property
    def smooth(self) -> bool:
        return self.curve is not None

    @property
    def curved(self) -> bool:
        return isinstance(self.curve, (Circle, Ellipse))

    @property
    def size(self) -> float:
        """Narrowest dimension."""
        if isinstance(self.curve, Circle):
            return 2.0 * self.curve.radius
        if isinstance(self.curve, Ellipse):
            return 2.0 * min(self.curve.semi_axes)
        z0, y0, z1, y1 = self.polygon.bounds
        return min(z1 - z0, y1 - y0)

    def interface_polylines(self, h: float) -> list[np.ndarray]:
        """Interface pieces as point chains (closed chains repeat their first point)."""
        if self.curved:
            ring = self.curve.discretize(h)
            return [np.vstack([ring, ring[:1]])]
        if isinstance(self.curve, SlabFaces):
            return [np.array([[self.curve.z1, 0.0], [self.curve.z1, 1.0]]),
                    np.array([[self.curve.z2, 0.0], [self.curve.z2, 1.0]])]
        return [np.asarray(self.polygon.exterior.coords)]

    def interface_lines(self):
        if isinstance(self.curve, SlabFaces):
            return MultiLineString([[(self.curve.z1, 0.0), (self.curve.z1, 1.0)],
                                    [(self.curve.z2, 0.0), (self.curve.z2, 1.0)]])
        return self.polygon.exterior

    def boundary_dissipation(self) -> np.ndarray:
        coords = np.asarray(self.polygon.exterior.coords)
        return self.profile(coords[:, 0], coords[:, 1])


@dataclass(frozen=True, eq=False)
class Branch:
    """Lateral rectangle [z0, z0 + width] x [1, 1 + depth] on the top wall."""

    z0: float
    width: float
    depth: float
    tag: str = WALL

    @property
    def center(self) -> float:
        return self.z0 + 0.5 * self.width

    @property
    def polygon(self) -> Polygon:
        return box(self.z0, 1.0, self.z0 + self.width, 1.0 + self.depth)


@dataclass(frozen=True)
class Port:
    tag: str
    z: float
    direction: int  # +1 when the outward normal is +z


@dataclass(frozen=True)
class BoundarySegment:
    tag: str
    start: tuple[float, float]
    end: tuple[float, float]


@dataclass(frozen=True, eq=False)
class Geometry:
    kind: DomainKind
    domain: Polygon
    segments: tuple[BoundarySegment, ...]
    ports: tuple[Port, ...]
    z_min: float
    truncation_z: float
    inclusion: Inclusion | None = None
    branches: tuple[Branch, ...] = ()
    resonator: Polygon | None = None
    feature_extent: float = 0.0
    lam: float | None = None

    @property
    def boundary_tags(self) -> frozenset[str]:
        tags = {s.tag for s in self.segments}
        if self.inclusion is not None:
            tags.add(INTERFACE)
        return frozenset(tags)

    @property
    def regions(self) -> tuple[str, ...]:
        return (EXTERIOR,) if self.inclusion is None else (EXTERIOR, INCLUSION)

    @property
    def dirichlet_tags(self) -> frozenset[str]:
        if self.kind == DomainKind.HALF_GUIDE_MIXED:
            return frozenset({SYMMETRY})
        return frozenset()

    @property
    def narrowest_feature(self) -> float:
        widths = [1.0] + [b.width for b in self.branches] + [b.depth for b in self.branches]
        if self.inclusion is not None:
            widths.append(self.inclusion.size)
        return min(widths)

    def port(self, tag: str) -> Port:
        for port in self.ports:
            if port.tag == tag:
                return port
        raise GeometryError(f"geometry has no port tagged {tag!r}")

    def port_at(self, z: float) -> Port:
        for port in self.ports:
            if abs(port.z - z) <= TOL * max(1.0, abs(z)):
                return port
        raise GeometryError(f"no truncation line at z={z}")

    def boundary_vertices(self) -> np.ndarray:
        return np.array([s.start for s in self.segments])

    def region_areas(self) -> dict[str, float]:
        if self.inclusion is None:
            return {EXTERIOR: self.domain.area}
        inner = self.inclusion.polygon.area
        return {EXTERIOR: self.domain.area - inner, INCLUSION: inner}


# ---------------------------------------------------------------- builders

def quarter_wavelength(lam: float) -> float:
    """Branch width l = pi / sqrt(lambda)."""
    return float(np.pi / np.sqrt(lam))


def default_window(extent: float, lam: float) -> float:
    gap = compute_mode_basis(lam).first_evanescent_gap
    return extent + settings.TRUNCATION_DECAY / gap


def _build_inclusion(spec: InclusionSpec, dissipation: DissipationSpec) -> Inclusion:
    if spec.shape == "disk":
        curve = Circle(tuple(spec.center), spec.radius)
        polygon = Polygon(curve.discretize(2.0 * np.pi * spec.radius / 512))
    elif spec.shape == "ellipse":
        curve = Ellipse(tuple(spec.center), tuple(spec.semi_axes), spec.angle)
        polygon = Polygon(curve.discretize(2.0 * np.pi * max(spec.semi_axes) / 512))
    elif spec.shape == "rectangle":
        z0, y0 = spec.corner
        z1, y1 = z0 + spec.width, y0 + spec.height
        curve = None
        polygon = Polygon([(z0, y0), (z1, y0), (z1, y1), (z0, y1)])
    else:
        curve = SlabFaces(spec.z1, spec.z2)
        polygon = Polygon([(spec.z1, 0.0), (spec.z2, 0.0), (spec.z2, 1.0), (spec.z1, 1.0)])

    reference = dissipation.reference
    if reference is None:
        centroid = polygon.centroid
        reference = (centroid.x, centroid.y)
    profile = DissipationProfile(dissipation.b0, tuple(dissipation.gradient), tuple(reference))
    inclusion = Inclusion(spec.shape, polygon, profile, curve)
    if np.any(inclusion.boundary_dissipation() <= 0):
        raise GeometryError("dissipation profile must stay positive on the inclusion")
    return inclusion


def _tag_segment(a, b, kind: DomainKind, z_min: float, z_t: float,
                 two_sided: bool, branches: tuple[Branch, ...]) -> str:
    if abs(a[0] - z_t) <= TOL and abs(b[0] - z_t) <= TOL:
        return TRUNCATION
    if abs(a[0] - z_min) <= TOL and abs(b[0] - z_min) <= TOL:
        if two_sided:
            return TRUNCATION_LEFT
        if kind != DomainKind.FULL_GUIDE:
            return SYMMETRY
    mid_z, mid_y = 0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])
    for branch in branches:
        if branch.tag == LIGAMENT and mid_y > 1.0 + TOL and \
                branch.z0 - TOL <= mid_z <= branch.z0 + branch.width + TOL:
            return LIGAMENT
    return WALL


def _check_branches(branches, z_min: float, z_t: float, flush_left: bool) -> None:
    for i, branch in enumerate(branches):
        left_ok = branch.z0 >= z_min if flush_left else branch.z0 > z_min
        if not (left_ok and branch.z0 + branch.width < z_t):
            raise GeometryError(
                f"branch [{branch.z0:.6g}, {branch.z0 + branch.width:.6g}] exits the "
                f"truncated computational window ({z_min:.6g}, {z_t:.6g})")
        for other in branches[i + 1:]:
            if branch.polygon.intersects(other.polygon):
                raise GeometryError("overlapping features: lateral branches intersect")


def _check_inclusion(inclusion: Inclusion, domain: Polygon, z_t: float, branches) -> None:
    poly = inclusion.polygon
    if poly.bounds[2] >= z_t - TOL:
        raise GeometryError("inclusion touches the truncation line")
    if inclusion.shape == "slab":
        if not domain.covers(poly):
            raise GeometryError("slab inclusion leaves the strip")
    elif not domain.contains(poly) or poly.distance(domain.exterior) <= 0.0:
        raise GeometryError("inclusion closure must lie strictly inside the domain")
    for branch in branches:
        if poly.distance(branch.polygon) <= 0.0:
            raise GeometryError("overlapping features: branch overlaps the inclusion")


def _assemble(kind: DomainKind, z_min: float, z_t: float, *, inclusion=None,
              branches: tuple[Branch, ...] = (), resonator: Polygon | None = None,
              two_sided: bool = False, feature_extent: float = 0.0,
              lam: float | None = None) -> Geometry:
    if z_t <= feature_extent:
        raise GeometryError(
            f"truncation line z_T={z_t:.6g} lies inside the feature region (extent {feature_extent:.6g})")
    _check_branches(branches, z_min, z_t, flush_left=kind != DomainKind.FULL_GUIDE)

    parts = [box(z_min, 0.0, z_t, 1.0)] + [b.polygon for b in branches]
    if resonator is not None:
        if not resonator.is_valid or resonator.bounds[2] >= z_t:
            raise GeometryError("resonator polygon must be simple and lie left of the truncation line")
        parts.append(resonator)
    union = unary_union(parts)
    if union.geom_type != "Polygon" or len(union.interiors) > 0:
        raise GeometryError("overlapping features: domain is not a simply connected polygon")
    domain = orient(union, 1.0)

    if inclusion is not None:
        _check_inclusion(inclusion, domain, z_t, branches)

    coords = np.asarray(domain.exterior.coords)[:-1]
    segments = []
    for a, b in zip(coords, np.roll(coords, -1, axis=0)):
        tag = _tag_segment(a, b, kind, z_min, z_t, two_sided, branches)
        segments.append(BoundarySegment(tag, (float(a[0]), float(a[1])), (float(b[0]), float(b[1]))))

    ports = [Port(TRUNCATION, z_t, +1)]
    if two_sided:
        ports.insert(0, Port(TRUNCATION_LEFT, z_min, -1))

    geometry = Geometry(kind=kind, domain=domain, segments=tuple(segments), ports=tuple(ports),
                        z_min=z_min, truncation_z=z_t, inclusion=inclusion,
                        branches=tuple(branches), resonator=resonator,
                        feature_extent=feature_extent, lam=lam)
    logger.debug(f"Built {kind.value} geometry: z in [{z_min:.4g}, {z_t:.4g}], "
                 f"tags={sorted(geometry.boundary_tags)}")
    return geometry


def _base_features(spec: GeometrySpec):
    inclusion = _build_inclusion(spec.inclusion, spec.dissipation) if spec.inclusion else None
    resonator = Polygon(spec.resonator.vertices) if spec.resonator else None
    extent = 0.0
    if inclusion is not None:
        extent = max(extent, inclusion.polygon.bounds[2])
    if resonator is not None:
        extent = max(extent, resonator.bounds[2])
    return inclusion, resonator, extent


def build_waveguide(spec: GeometrySpec, lam: float | None = None) -> Geometry:
    """Half-infinite guide with a Neumann end wall (or a resonator) on the left."""
    inclusion, resonator, extent = _base_features(spec)

    branches = []
    if spec.branch is not None:
        width = spec.branch.width
        if spec.branch.quarter_wavelength or width is None:
            if lam is None:
                raise GeometryError("branch width defaults to pi/sqrt(lambda): lambda is required")
            width = quarter_wavelength(lam)
        branches.append(Branch(spec.branch.attach_z0, width, spec.branch.depth))
    if spec.ligament is not None:
        branches.append(Branch(spec.ligament.attach_z0, spec.ligament.width,
                               spec.ligament.length, tag=LIGAMENT))
    for branch in branches:
        extent = max(extent, branch.z0 + branch.width)

    z_t = spec.truncation_z
    if z_t is None:
        if lam is None:
            raise GeometryError("truncation_z is unset and no lambda given to size the window")
        z_t = default_window(extent, lam)
    return _assemble(DomainKind.FULL_GUIDE, 0.0, z_t, inclusion=inclusion,
                     branches=tuple(branches), resonator=resonator,
                     feature_extent=extent, lam=lam)


def build_absorber_domain(spec: GeometrySpec, sigma: float, kappa: int, L: float,
                          lam: float, ligament_width: float | None = None) -> Geometry:
    """Base guide plus the lateral branch centered at sigma + 2 kappa pi / sqrt(lambda).

    The branch has width pi/sqrt(lambda) and depth L - 1; with `ligament_width`
    it is replaced by a thin ligament of that width and the same length.
    """
    if L <= 1.0:
        raise GeometryError(f"branch length requires L > 1, got {L}")
    if kappa < 0:
        raise GeometryError(f"kappa must be non-negative, got {kappa}")
    if spec.branch is not None or spec.ligament is not None:
        raise GeometryError("absorber base geometry must not carry its own branch")

    inclusion, resonator, extent = _base_features(spec)
    ell = quarter_wavelength(lam)
    center = sigma + 2.0 * kappa * np.pi / np.sqrt(lam)
    width = ell if ligament_width is None else ligament_width
    tag = WALL if ligament_width is None else LIGAMENT
    branch = Branch(center - 0.5 * width, width, L - 1.0, tag=tag)

    z_t = spec.truncation_z
    if z_t is None:
        z_t = default_window(max(extent, branch.z0 + width), lam)
    return _assemble(DomainKind.FULL_GUIDE, 0.0, z_t, inclusion=inclusion, branches=(branch,),
                     resonator=resonator, feature_extent=extent, lam=lam)


def build_half_guide(L: float, lam: float, kind: DomainKind,
                     truncation_z: float | None = None) -> Geometry:
    """Half of the branch guide in the reflected frame z -> -z.

    The symmetry line sits at z = 0, the branch of width l/2 spans
    y in [1, L) next to it and the port faces +z.
    """
    if L <= 1.0:
        raise GeometryError(f"half guide requires L > 1, got {L}")
    if kind == DomainKind.FULL_GUIDE:
        raise GeometryError("half guide needs a half_guide_* kind")
    half = 0.5 * quarter_wavelength(lam)
    branch = Branch(0.0, half, L - 1.0)
    z_t = truncation_z if truncation_z is not None else default_window(half, lam)
    return _assemble(kind, 0.0, z_t, branches=(branch,), feature_extent=half, lam=lam)


def build_branch_guide(L: float, lam: float, sigma: float = 0.0,
                       truncation_z: float | None = None) -> Geometry:
    """Two-sided straight guide with the quarter-wavelength branch centered at sigma."""
    if L <= 1.0:
        raise GeometryError(f"branch guide requires L > 1, got {L}")
    ell = quarter_wavelength(lam)
    branch = Branch(sigma - 0.5 * ell, ell, L - 1.0)
    extent = abs(sigma) + 0.5 * ell
    z_t = truncation_z if truncation_z is not None else default_window(extent, lam)
    return _assemble(DomainKind.FULL_GUIDE, -z_t, z_t, branches=(branch,), two_sided=True,
                     feature_extent=extent, lam=lam)
