import numpy as np

from app.api.common import add_common, add_lambda, geometry_spec, mesh_controls, parse_grid, run_config
from app.core.config import settings
from app.core.errors import ConfigError
from app.services.absorber import (default_l_grid, design_absorber, eta_minimum_scan, half_guide_coefficients,
                                   ligament_l_grid)
from app.services.geometry import build_waveguide
from app.services.mesh import MeshControls
from app.utils.io import emit, provenance, render_csv, render_json
from app.utils.workers import ordered_map


def _half_guide_job(job):
    L, lam, controls = job
    return half_guide_coefficients(L, lam, controls)


def run_halfguide(args) -> int:
    config = run_config(args, "halfguide", L=args.L)
    controls = MeshControls(h=config.h, dtn_terms=config.dtn_terms)
    coefficients = ordered_map(_half_guide_job, [(L, config.lam, controls) for L in args.L], config.workers)
    rows = []
    for c in coefficients:
        rows.append([c.L, c.r.real, c.r.imag, c.R.real, c.R.imag, c.reflection.real, c.reflection.imag,
                     c.transmission.real, c.transmission.imag])
    columns = ["L", "re_r", "im_r", "re_R", "im_R", "re_reflection", "im_reflection",
               "re_transmission", "im_transmission"]
    emit(render_csv(columns, rows, provenance(config)), config.output)
    return 0


def _l_grid(args, lam: float) -> np.ndarray:
    if args.L_min is None and args.L_max is None:
        if args.ligament is not None:
            return ligament_l_grid(lam, args.L_points)
        return default_l_grid(lam, args.h)
    if args.L_min is None or args.L_max is None or args.L_max <= args.L_min:
        raise ConfigError("--L-min and --L-max must both be given with L-min < L-max")
    return np.linspace(args.L_min, args.L_max, args.L_points or 2 * settings.L_POINTS_PER_PERIOD)


def run_design(args) -> int:
    config = run_config(args, "absorber", kappa=args.kappa, k_offset=args.k_offset, ligament=args.ligament)
    spec = geometry_spec(config)
    design = design_absorber(spec, config.lam, config.eta, mesh_controls(config, args), kappa=args.kappa,
                             k_offset=args.k_offset, L_grid=_l_grid(args, config.lam),
                             ligament_width=args.ligament, workers=config.workers)
    report = design.report()
    header = provenance(config) + [f"sigma={design.sigma}", f"kappa={design.kappa}",
                                   f"best_L={design.best_L}", f"best_abs_R={design.best_abs_R}"]
    rows = [[L, R.real, R.imag, -np.log(max(abs(R), 1e-300))] for L, R in zip(design.L_grid, design.R_samples)]
    emit(render_csv(["L", "re_R", "im_R", "neg_log_abs_R"], rows, header), config.output)
    if config.json_output:
        emit(render_json(report, header), config.json_output)
    return 0


def run_scan(args) -> int:
    config = run_config(args, "absorber")
    if not config.etas:
        raise ConfigError("scan needs --etas")
    geometry = build_waveguide(geometry_spec(config), config.lam)
    found = eta_minimum_scan(geometry, config.lam, config.etas, mesh_controls(config, args), config.workers)
    header = provenance(config) + [f"eta_star={found.eta_star}", f"min_abs_S={found.min_abs_S}",
                                   f"interior={int(found.interior)}"]
    rows = [[eta, s] for eta, s in zip(found.etas, found.abs_S)]
    emit(render_csv(["eta", "abs_S"], rows, header), config.output)
    return 0


def register(subparsers) -> None:
    half = subparsers.add_parser("halfguide", help="half-guide reflections r, R of the quarter-wavelength branch")
    add_lambda(half)
    half.add_argument("--L", type=parse_grid, required=True, help="branch lengths")
    half.add_argument("--h", type=float, default=settings.MESH_H)
    half.add_argument("--dtn-terms", type=int, default=settings.DTN_TERMS)
    half.add_argument("--workers", type=int, default=settings.WORKERS)
    half.add_argument("--output")
    half.set_defaults(handler=run_halfguide)

    absorber = subparsers.add_parser("absorber", help="perfect-absorber synthesis")
    actions = absorber.add_subparsers(dest="action", required=True)

    design = actions.add_parser("design", help="place a branch and sweep its length")
    add_common(design)
    design.add_argument("--eta", type=float, required=True)
    design.add_argument("--kappa", type=int, help="branch offset in periods (chosen automatically when omitted)")
    design.add_argument("--k-offset", type=int, default=0)
    design.add_argument("--L-min", dest="L_min", type=float)
    design.add_argument("--L-max", dest="L_max", type=float)
    design.add_argument("--L-points", dest="L_points", type=int)
    design.add_argument("--ligament", type=float, help="ligament width; uses the ligament resonator")
    design.set_defaults(handler=run_design)

    scan = actions.add_parser("scan", help="minimise |S| over eta")
    add_common(scan)
    scan.add_argument("--etas", type=parse_grid, required=True)
    scan.set_defaults(handler=run_scan)
