import argparse
import logging
import sys

from dotenv import load_dotenv

# Load environment variables before settings are read
load_dotenv()

from app.api import absorber, asymptotics, modes, oracle, scattering  # noqa: E402
from app.core.config import settings  # noqa: E402
from app.core.errors import WaveSinkError  # noqa: E402

logger = logging.getLogger("wavesink")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wavesink",
                                     description="Dissipative inclusions in a 2D acoustic waveguide")
    parser.add_argument("--version", action="version", version=f"{settings.APP_NAME} {settings.VERSION}")
    parser.add_argument("--log-level", default=settings.LOG_LEVEL,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Subcommand groups
    for group in (modes, scattering, asymptotics, oracle, absorber):
        group.register(subparsers)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level="DEBUG" if settings.DEBUG else args.log_level, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except WaveSinkError as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
