"""
CLI entrypoint for adaptive-lookahead policy iteration.

Subcommands:
    solve  <config>           write V*, pi* and the MDP of every seed
    run    <config>           run one planner on every seed
    sweep  <config>           run a planner grid on every seed and rank it
    render <csv...> --out f   draw trace or comparison CSVs as SVG

Exit codes:
    0 success, 1 numerical failure, 2 invalid configuration or arguments,
    3 non-convergence, 4 I/O failure
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Sequence

from loguru import logger

from commands import cmd_render, cmd_run, cmd_solve, cmd_sweep
from errors import InvalidArgumentError, PlanningError
from experiment_setup import load_config
from ui import render_error


EXIT_FAILURE = 1
EXIT_INVALID = 2
EXIT_IO = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alpi",
        description="Adaptive-lookahead policy iteration on tabular MDPs",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-iteration progress")
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("solve", "write V*, pi* and the MDP of every seed"),
        ("run", "run one planner on every seed"),
        ("sweep", "run a planner grid on every seed and rank it"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("config", type=Path, help="experiment JSON file")
        sub.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a top-level key; VALUE is parsed as JSON when possible",
        )
        sub.add_argument("--seeds", type=int, nargs="+", help="seeds to run")
        sub.add_argument("--backend", choices=["tree", "dp"], help="lookahead backend")
        sub.add_argument("--out", type=Path, help="output directory")

    render = subparsers.add_parser("render", help="draw trace or comparison CSVs as SVG")
    render.add_argument("inputs", type=Path, nargs="+", help="trace CSVs or one comparison CSV")
    render.add_argument("--out", type=Path, default=Path("chart.svg"), help="SVG file to write")
    return parser


def _overrides(args: argparse.Namespace) -> List[str]:
    """--set items followed by the dedicated flags, which win on conflicts."""
    overrides = list(args.overrides)
    if args.seeds:
        overrides.append(f"seeds={args.seeds}")
    if args.backend:
        overrides.append(f"backend={args.backend}")
    if args.out:
        overrides.append(f"out={json.dumps(args.out.as_posix())}")
    return overrides


def configure_logging(verbose: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO")


def cli(argv: Sequence[str] | None = None) -> int:
    """
    Parse arguments, dispatch the subcommand and map failures to exit codes.

    Args:
        argv: Argument list without the program name; defaults to sys.argv.

    Returns:
        Process exit code.
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    logger.info(f"Starting '{args.command}'")

    try:
        if args.command == "render":
            return cmd_render(args.inputs, args.out)
        config = load_config(args.config, _overrides(args))
        command = {"solve": cmd_solve, "run": cmd_run, "sweep": cmd_sweep}[args.command]
        return command(config)
    except InvalidArgumentError as e:
        render_error(str(e), hint="Check the configuration file and the command-line overrides.")
        return EXIT_INVALID
    except OSError as e:
        render_error(f"I/O failure: {e}", hint="Check that input files exist and the output directory is writable.")
        return EXIT_IO
    except (KeyError, ValueError) as e:
        render_error(f"Malformed input: {e}", hint="Input files must follow the documented formats.")
        return EXIT_INVALID
    except (PlanningError, ArithmeticError) as e:
        render_error(f"Numerical failure: {e}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(cli())
