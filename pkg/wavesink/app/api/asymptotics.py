from app.api.common import add_common, geometry_spec, mesh_controls, parse_grid, run_config
from app.services.asymptotics import large_eta_model, rate_study, small_eta_model
from app.services.geometry import build_waveguide
from app.utils.io import emit, provenance, render_csv, render_json


def _run(args, regime: str) -> int:
    config = run_config(args, f"asym-{regime}")
    geometry = build_waveguide(geometry_spec(config), config.lam)
    controls = mesh_controls(config, args)
    build = small_eta_model if regime == "small" else large_eta_model
    model = build(geometry, config.lam, controls)
    report = rate_study(geometry, config.lam, config.etas, regime, controls, config.workers, model=model)

    header = provenance(config) + [f"slope_defect0={report.slope_defect0}",
                                   f"slope_defect1={report.slope_defect1}",
                                   f"slope_interior={report.slope_interior}"]
    rows = [[r.eta, r.defect0, r.defect1, r.interior_l2] for r in report.rows]
    emit(render_csv(["eta", "defect0", "defect1", "interior_l2"], rows, header), config.output)
    if config.json_output:
        emit(render_json(model.record(), header), config.json_output)
    return 0


def run_small(args) -> int:
    return _run(args, "small")


def run_large(args) -> int:
    return _run(args, "large")


def register(subparsers) -> None:
    small = subparsers.add_parser("asym-small", help="small-eta model and its rate study")
    add_common(small)
    small.add_argument("--etas", type=parse_grid, default=parse_grid("log:1e-3:1e-1:5"))
    small.set_defaults(handler=run_small)

    large = subparsers.add_parser("asym-large", help="large-eta model and its rate study")
    add_common(large)
    large.add_argument("--etas", type=parse_grid, default=parse_grid("log:1e3:1e6:5"))
    large.set_defaults(handler=run_large)
