import numpy as np

from app.api.common import add_lambda, run_config
from app.services.oracle1d import SlabSpec, slab_field, slab_reflection
from app.utils.io import emit, provenance, render_csv


def run_slab(args) -> int:
    config = run_config(args, "oracle", z1=args.z1, z2=args.z2, b0=args.b0,
                        truncation_z=args.truncation_z, samples=args.samples)
    spec = SlabSpec(lam=config.lam, z1=args.z1, z2=args.z2, b0=args.b0, eta=config.eta,
                    truncation_z=args.truncation_z)
    r = slab_reflection(spec)
    z = np.linspace(0.0, spec.truncation_z, args.samples)
    u = slab_field(spec, z)
    rows = [[zi, ui.real, ui.imag, r.real, r.imag] for zi, ui in zip(z, u)]
    emit(render_csv(["z", "re_u", "im_u", "re_R", "im_R"], rows, provenance(config)), config.output)
    return 0


def register(subparsers) -> None:
    oracle = subparsers.add_parser("oracle", help="closed-form 1D oracles")
    kinds = oracle.add_subparsers(dest="oracle", required=True)
    slab = kinds.add_parser("slab", help="full-width slab reflection and field")
    add_lambda(slab)
    slab.add_argument("--z1", type=float, default=1.0)
    slab.add_argument("--z2", type=float, default=2.0)
    slab.add_argument("--b0", type=float, default=1.0)
    slab.add_argument("--eta", type=float, default=5.0)
    slab.add_argument("--truncation-z", type=float, default=4.0)
    slab.add_argument("--samples", type=int, default=41)
    slab.add_argument("--output")
    slab.set_defaults(handler=run_slab)
