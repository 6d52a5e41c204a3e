"""Argument parsing shared by every subcommand."""
import argparse
import re

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from app.core.config import settings
from app.core.errors import ConfigError
from app.schemas.geometry import GeometrySpec, load_geometry_spec
from app.schemas.run import RunConfig
from app.services.mesh import MeshControls

_PI_FORM = re.compile(r"^\s*([0-9.eE+-]*)\s*\*?\s*pi\s*$")
_LOG_GRID = re.compile(r"^log:([^:]+):([^:]+):(\d+)$")


def parse_lambda(text: str) -> float:
    """A plain number, or `<x>pi` meaning (x pi)^2."""
    match = _PI_FORM.match(text)
    try:
        if match:
            x = float(match.group(1)) if match.group(1) else 1.0
            return float((x * np.pi) ** 2)
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid lambda {text!r}") from None


def parse_grid(text: str) -> list[float]:
    """Comma-separated values, or `log:<start>:<stop>:<n>` for a log-spaced grid."""
    match = _LOG_GRID.match(text.strip())
    try:
        if match:
            start, stop, n = float(match.group(1)), float(match.group(2)), int(match.group(3))
            if start <= 0 or stop <= 0:
                raise ValueError("log grid needs positive bounds")
            return np.logspace(np.log10(start), np.log10(stop), n).tolist()
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}: {exc}") from None


def add_lambda(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--lambda", dest="lam", type=parse_lambda, required=True,
                        help="spectral parameter; '0.8pi' means (0.8*pi)^2")


def add_common(parser: argparse.ArgumentParser) -> None:
    add_lambda(parser)
    parser.add_argument("--config", help="geometry TOML; a bare straight guide when omitted")
    parser.add_argument("--h", type=float, default=settings.MESH_H, help="target mesh size")
    parser.add_argument("--dtn-terms", type=int, default=settings.DTN_TERMS)
    parser.add_argument("--no-grade", action="store_true", help="skip boundary-layer grading")
    parser.add_argument("--workers", type=int, default=settings.WORKERS)
    parser.add_argument("--output", help="CSV output path (stdout when omitted)")
    parser.add_argument("--json", dest="json_output", help="JSON report path")


def run_config(args: argparse.Namespace, command: str, **options) -> RunConfig:
    try:
        return RunConfig(command=command, config=getattr(args, "config", None), lam=args.lam,
                         eta=getattr(args, "eta", 0.0) or 0.0, etas=getattr(args, "etas", None) or [],
                         h=getattr(args, "h", settings.MESH_H),
                         dtn_terms=getattr(args, "dtn_terms", settings.DTN_TERMS),
                         workers=getattr(args, "workers", settings.WORKERS),
                         output=getattr(args, "output", None),
                         json_output=getattr(args, "json_output", None), options=options)
    except PydanticValidationError as exc:
        raise ConfigError(f"invalid run configuration: {exc}") from exc


def geometry_spec(config: RunConfig) -> GeometrySpec:
    return load_geometry_spec(config.config) if config.config else GeometrySpec()


def mesh_controls(config: RunConfig, args: argparse.Namespace) -> MeshControls:
    return MeshControls(h=config.h, dtn_terms=config.dtn_terms, grade=not getattr(args, "no_grade", False))


def matrix_columns(prefix: str, J: int) -> list[str]:
    pairs = [f"{j}{k}" for j in range(J) for k in range(J)]
    return [f"re_{prefix}_{p}" for p in pairs] + [f"im_{prefix}_{p}" for p in pairs]


def matrix_cells(value: np.ndarray) -> list[float]:
    flat = np.asarray(value, dtype=complex).ravel()
    return flat.real.tolist() + flat.imag.tolist()
