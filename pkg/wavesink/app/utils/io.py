"""Text dumps of meshes and fields, CSV tables and JSON reports.

Numbers are written with 17 significant digits so every dump reads back
bit-exactly. Mesh indices in dumps are 1-based.
"""
import csv
import io
import logging
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np
from pydantic import BaseModel

from app.core.config import settings
from app.core.errors import ConfigError
from app.services.mesh import Grading, Mesh

logger = logging.getLogger(__name__)


def fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------- meshes and fields

def _write_mesh(mesh: Mesh, out: TextIO) -> None:
    out.write(f"{mesh.n_vertices} {len(mesh.triangles)} {len(mesh.boundary_edges)}\n")
    for z, y in mesh.vertices:
        out.write(f"{fmt(z)} {fmt(y)}\n")
    for (a, b, c), region in zip(mesh.triangles + 1, mesh.regions):
        out.write(f"{a} {b} {c} {region}\n")
    for (a, b), tag in zip(mesh.boundary_edges + 1, mesh.boundary_tags):
        out.write(f"{a} {b} {tag}\n")


def _read_mesh(lines: list[str]) -> tuple[Mesh, int]:
    try:
        nv, nt, nbe = (int(x) for x in lines[0].split())
        vertices = np.array([[float(x) for x in line.split()] for line in lines[1:1 + nv]])
        tri = np.array([[int(x) for x in line.split()] for line in lines[1 + nv:1 + nv + nt]], dtype=int).reshape(-1, 4)
        start = 1 + nv + nt
        edges, tags = [], []
        for line in lines[start:start + nbe]:
            a, b, tag = line.split()
            edges.append([int(a) - 1, int(b) - 1])
            tags.append(tag)
        if len(vertices) != nv or len(tri) != nt or len(edges) != nbe:
            raise ValueError(f"expected {nv} vertices, {nt} triangles and {nbe} edges")
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"malformed mesh dump: {exc}") from exc
    mesh = Mesh(vertices=vertices.reshape(-1, 2), triangles=tri[:, :3] - 1, regions=tri[:, 3].copy(),
                boundary_edges=np.array(edges, dtype=int).reshape(-1, 2), boundary_tags=np.array(tags),
                target_h=0.0, grading=Grading(min_h=0.0))
    return mesh, start + nbe


def write_mesh(mesh: Mesh, path: str | Path) -> None:
    with Path(path).open("w") as out:
        _write_mesh(mesh, out)


def read_mesh(path: str | Path) -> Mesh:
    return _read_mesh(Path(path).read_text().splitlines())[0]


def write_field(mesh: Mesh, values: np.ndarray, path: str | Path) -> None:
    if len(values) != mesh.n_dofs:
        raise ConfigError(f"field has {len(values)} values for {mesh.n_dofs} dofs")
    with Path(path).open("w") as out:
        _write_mesh(mesh, out)
        for v in values:
            out.write(f"{fmt(v.real)} {fmt(v.imag)}\n")
    logger.info(f"Wrote field with {len(values)} dofs to {path}")


def read_field(path: str | Path) -> tuple[Mesh, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    mesh, offset = _read_mesh(lines)
    try:
        pairs = np.array([[float(x) for x in line.split()] for line in lines[offset:] if line.strip()])
    except ValueError as exc:
        raise ConfigError(f"malformed field values: {exc}") from exc
    values = pairs[:, 0] + 1j * pairs[:, 1] if len(pairs) else np.empty(0, dtype=complex)
    if len(values) != mesh.n_dofs:
        raise ConfigError(f"field dump has {len(values)} values for {mesh.n_dofs} dofs")
    return mesh, values


# ---------------------------------------------------------------- tables

def provenance(config: BaseModel) -> list[str]:
    lines = [f"{settings.APP_NAME.lower()} {settings.VERSION}"]
    for key, value in config.model_dump(mode="json").items():
        lines.append(f"{key}={value}")
    return lines


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return fmt(float(value))
    return str(value)


def render_csv(columns: Sequence[str], rows: Iterable[Sequence], header: Sequence[str] = ()) -> str:
    buffer = io.StringIO()
    for line in header:
        buffer.write(f"# {line}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buffer.getvalue()


def read_csv(text: str) -> list[dict[str, str]]:
    body = [line for line in text.splitlines() if line and not line.startswith("#")]
    return list(csv.DictReader(body))


class Report(BaseModel):
    provenance: list[str]
    result: dict


def render_json(result: BaseModel, header: Sequence[str] = ()) -> str:
    report = Report(provenance=list(header), result=result.model_dump(mode="json"))
    return report.model_dump_json(indent=2)


def emit(text: str, path: str | Path | None) -> None:
    """Write to `path`, or to stdout when no path is given."""
    if path is None:
        print(text, end="" if text.endswith("\n") else "\n")
        return
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    logger.info(f"Wrote {path}")
