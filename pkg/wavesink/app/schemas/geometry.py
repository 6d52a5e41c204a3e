"""Geometry configuration models.

Geometry configs are TOML files. Points are written as `[z, y]`: z runs
along the guide, y across the unit strip. A minimal config:

    truncation_z = 4.0

    [inclusion]
    shape = "disk"
    center = [1.5, 0.5]
    radius = 0.3

    [dissipation]
    b0 = 1.0

Optional tables: `[resonator]` (`vertices = [[z, y], ...]`, a polygon glued
to the strip), `[branch]` (`attach_z0`, `width`, `depth`, `quarter_wavelength`)
and `[ligament]` (`attach_z0`, `width`, `length`). Omitting `truncation_z`
lets the builder size the window from lambda.
"""
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from app.core.errors import ConfigError

Point = Tuple[float, float]


class InclusionSpec(BaseModel):
    shape: Literal["disk", "ellipse", "rectangle", "slab"]
    center: Optional[Point] = None
    radius: Optional[float] = Field(None, gt=0)
    semi_axes: Optional[Tuple[float, float]] = None
    angle: float = 0.0
    corner: Optional[Point] = None
    width: Optional[float] = Field(None, gt=0)
    height: Optional[float] = Field(None, gt=0)
    z1: Optional[float] = None
    z2: Optional[float] = None

    @model_validator(mode="after")
    def check_shape_fields(self):
        required = {
            "disk": ("center", "radius"),
            "ellipse": ("center", "semi_axes"),
            "rectangle": ("corner", "width", "height"),
            "slab": ("z1", "z2"),
        }[self.shape]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.shape} inclusion needs {', '.join(missing)}")
        if self.shape == "ellipse" and min(self.semi_axes) <= 0:
            raise ValueError("ellipse semi-axes must be positive")
        if self.shape == "slab" and not 0 < self.z1 < self.z2:
            raise ValueError("slab needs 0 < z1 < z2")
        return self


class DissipationSpec(BaseModel):
    b0: float = Field(1.0, gt=0)
    gradient: Point = (0.0, 0.0)  # (db/dz, db/dy)
    reference: Optional[Point] = None  # defaults to the inclusion centroid


class BranchSpec(BaseModel):
    attach_z0: float
    width: Optional[float] = Field(None, gt=0)
    depth: float = Field(gt=0)
    quarter_wavelength: bool = False


class LigamentSpec(BaseModel):
    attach_z0: float
    width: float = Field(gt=0)
    length: float = Field(gt=0)


class ResonatorSpec(BaseModel):
    vertices: List[Point] = Field(min_length=3)


class GeometrySpec(BaseModel):
    strip_height: float = 1.0
    truncation_z: Optional[float] = Field(None, gt=0)
    resonator: Optional[ResonatorSpec] = None
    inclusion: Optional[InclusionSpec] = None
    dissipation: DissipationSpec = DissipationSpec()
    branch: Optional[BranchSpec] = None
    ligament: Optional[LigamentSpec] = None

    @field_validator("strip_height")
    @classmethod
    def unit_strip(cls, value: float) -> float:
        if value != 1.0:
            raise ValueError("only the unit strip height is supported")
        return value


def load_geometry_spec(path: str | Path) -> GeometrySpec:
    path = Path(path)
    try:
        with path.open("rb") as handle:
            raw = tomllib.load(handle)
    except FileNotFoundError as exc:
        raise ConfigError(f"geometry config not found: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"geometry config {path} is not valid TOML: {exc}") from exc
    try:
        return GeometrySpec.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid geometry config {path}: {exc}") from exc
