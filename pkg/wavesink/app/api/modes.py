from app.api.common import add_lambda, run_config
from app.core.config import settings
from app.services.modes import compute_mode_basis
from app.utils.io import emit, provenance, render_csv


def run_modes(args) -> int:
    config = run_config(args, "modes")
    basis = compute_mode_basis(config.lam, config.dtn_terms)
    rows = []
    for j, eigenvalue in enumerate(basis.eigenvalues):
        propagating = j < basis.J
        alpha = basis.alpha[j] if propagating else ""
        decay = "" if propagating else basis.decay[j - basis.J]
        rows.append([j, eigenvalue, int(propagating), alpha, decay])
    header = provenance(config) + [f"J={basis.J}"]
    emit(render_csv(["j", "lambda_j", "propagating", "alpha_j", "decay_j"], rows, header), config.output)
    return 0


def register(subparsers) -> None:
    parser = subparsers.add_parser("modes", help="transverse eigenvalues, wavenumbers and J")
    add_lambda(parser)
    parser.add_argument("--dtn-terms", type=int, default=settings.DTN_TERMS)
    parser.add_argument("--output")
    parser.set_defaults(handler=run_modes)
