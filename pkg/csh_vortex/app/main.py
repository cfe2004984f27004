"""Command-line entry point.

Run with:
    python -m csh_vortex solve --config configs/reference.toml --out results/

Subcommands: catalog, check-cartan, constraints, solve, sweep, probe.
Reports go to ``<out>/<command>.json``; logs go to stderr.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from csh_vortex.app.commands import cartan, constraints, solve, sweep
from csh_vortex.app.commands.common import load_config
from csh_vortex.app.config import get_settings
from csh_vortex.app.errors import CshError

logger = logging.getLogger("csh_vortex")

COMMANDS = {
    "catalog": lambda config, out, args: cartan.run_catalog(config, out, args.types),
    "check-cartan": lambda config, out, args: cartan.run_check_cartan(config, out),
    "constraints": lambda config, out, args: constraints.run_constraints(config, out),
    "solve": lambda config, out, args: solve.run_solve(config, out),
    "sweep": lambda config, out, args: sweep.run_sweep(config, out),
    "probe": lambda config, out, args: sweep.run_probe(config, out),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--out", help="output directory (default: CSH_OUTPUT_DIR)")
    common.add_argument("--verbose", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(
        prog="csh_vortex",
        description="Doubly periodic Chern-Simons-Higgs vortices for simple Lie algebras",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    catalog = sub.add_parser("catalog", parents=[common], help="certify Cartan data of simple types")
    catalog.add_argument("--types", type=lambda s: [t for t in s.split(",") if t], default=None,
                         help="comma separated labels, e.g. A1,A2,G2")
    sub.add_parser("check-cartan", parents=[common], help="certify the configured (explicit) matrix")
    sub.add_parser("constraints", parents=[common], help="resolve the constants for given coefficients")
    sub.add_parser("solve", parents=[common], help="minimize at the configured lambda")
    sub.add_parser("sweep", parents=[common], help="solve along a lambda sweep, write sweep.csv")
    sub.add_parser("probe", parents=[common], help="bisect for the smallest convergent lambda")
    return parser


def configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, get_settings().log_level.upper(), logging.INFO)
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        config = load_config(args.config)
        out_dir = Path(args.out) if args.out else get_settings().output_path
        logger.info(f"{args.command}: start (config={args.config or 'defaults'}, out={out_dir})")
        code = COMMANDS[args.command](config, out_dir, args)
        logger.info(f"{args.command}: done")
        return code
    except CshError as exc:
        print(f"error code={exc.code} exit={exc.exit_code} reason={_one_line(exc)}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:
        logger.exception("unexpected failure")
        print(f"error code=unexpected exit=1 reason={_one_line(exc)}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
