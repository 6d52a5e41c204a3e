from app.api.common import add_common, geometry_spec, matrix_cells, matrix_columns, mesh_controls, parse_grid, run_config
from app.core.errors import ConfigError
from app.schemas.results import ScatteringRecord
from app.services.geometry import build_waveguide
from app.services.scattering import ScatteringSolver, check_record, eta_sweep
from app.utils.io import emit, provenance, render_csv, render_json, write_field


def _columns(J: int) -> list[str]:
    return (["eta", "lambda"] + matrix_columns("s", J) + ["energy_residual", "symmetry_defect"]
            + [f"l2_inclusion_norm_{j}" for j in range(J)])


def _row(record: ScatteringRecord) -> list:
    return ([record.eta, record.lam] + matrix_cells(record.S.to_array())
            + [record.energy_residual, record.symmetry_defect] + list(record.inclusion_l2_norms))


def run_solve(args) -> int:
    config = run_config(args, "solve", mode=args.mode, field=args.field)
    geometry = build_waveguide(geometry_spec(config), config.lam)
    result = ScatteringSolver(geometry, config.lam, mesh_controls(config, args)).solve(config.eta)
    if not 0 <= args.mode < result.J:
        raise ConfigError(f"incident mode {args.mode} is not propagating (J={result.J})")
    field = result.fields[args.mode]
    write_field(field.mesh, field.values, args.field)
    record = result.record()
    emit(render_csv(_columns(record.J), [_row(record)], provenance(config)), config.output)
    check_record(record)
    return 0


def run_smatrix(args) -> int:
    config = run_config(args, "smatrix")
    geometry = build_waveguide(geometry_spec(config), config.lam)
    record = ScatteringSolver(geometry, config.lam, mesh_controls(config, args)).solve(config.eta).record()
    header = provenance(config)
    emit(render_csv(_columns(record.J), [_row(record)], header), config.output)
    if config.json_output:
        emit(render_json(record, header), config.json_output)
    check_record(record)
    return 0


def run_sweep(args) -> int:
    config = run_config(args, "sweep")
    if not config.etas:
        raise ConfigError("sweep needs --etas")
    geometry = build_waveguide(geometry_spec(config), config.lam)
    records = eta_sweep(geometry, config.lam, config.etas, mesh_controls(config, args), workers=config.workers)
    emit(render_csv(_columns(records[0].J), [_row(r) for r in records], provenance(config)), config.output)
    for record in records:
        check_record(record)
    return 0


def register(subparsers) -> None:
    solve = subparsers.add_parser("solve", help="solve one incident mode and dump the field")
    add_common(solve)
    solve.add_argument("--eta", type=float, default=0.0)
    solve.add_argument("--mode", type=int, default=0)
    solve.add_argument("--field", required=True, help="field dump path")
    solve.set_defaults(handler=run_solve)

    smatrix = subparsers.add_parser("smatrix", help="scattering matrix at one eta")
    add_common(smatrix)
    smatrix.add_argument("--eta", type=float, default=0.0)
    smatrix.set_defaults(handler=run_smatrix)

    sweep = subparsers.add_parser("sweep", help="scattering matrices over an eta grid")
    add_common(sweep)
    sweep.add_argument("--etas", type=parse_grid, required=True)
    sweep.set_defaults(handler=run_sweep)
