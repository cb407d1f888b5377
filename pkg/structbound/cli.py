#!/usr/bin/env python3

import argparse
import logging
import sys
import time
from typing import TYPE_CHECKING, List, Optional

import colorama
from colorama import Fore

from structbound import __version__, utils

if TYPE_CHECKING:
    from structbound.config import Config

COMMANDS = ("run", "sweep", "converge", "respond", "energy-audit")


def add_boolean_argument(parser: argparse._ActionsContainer, config: "Config", name: str, help_text: str):
    var_name = name.replace("-", "_")
    default = getattr(config, var_name)
    group = parser.add_mutually_exclusive_group()
    group.add_argument(
        f"--{name}",
        action="store_true",
        default=default,
        help=help_text
    )
    group.add_argument(
        f"--no-{name}",
        action="store_false",
        dest=var_name,
        default=default,
        help=f"Negates --{name}. Only relevant if config file contains '{var_name} = true'."
    )


def float_list(value: str) -> List[float]:
    try:
        return [float(v) for v in value.strip().strip("[]").split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"'{value}' is not a comma separated list of numbers") from e


def init_parser(config: "Config") -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="structbound",
        description="Simulates fields coupled to structured boundaries and writes CSV/JSON artifacts.",
    )

    parser.add_argument("command", choices=COMMANDS, help="What to do with the scenario")
    parser.add_argument("scenario", help="Scenario document")

    # Non-boolean optional arguments
    parser.add_argument(
        "--out",
        "-o",
        type=str,
        default=config.out,
        help=f"Output directory; artifacts go to OUT/<scenario name>/. Default: {config.out}."
    )
    parser.add_argument("--dt", type=float, help="Overrides the scenario's time step.")
    parser.add_argument("--t-end", type=float, help="Overrides the scenario's end time.")
    parser.add_argument(
        "--seed",
        type=int,
        default=config.seed,
        help=f"Seed for randomized checks. Default: {config.seed}."
    )
    parser.add_argument(
        "--ktilde",
        type=float_list,
        default=config.ktilde,
        help="Comma separated interface stiffness ladder for `sweep`. " +
             f"Default: {','.join('%g' % k for k in config.ktilde)}."
    )
    parser.add_argument(
        "--levels",
        type=int,
        default=config.levels,
        help=f"Number of refinement levels for `converge`. Default: {config.levels}."
    )
    parser.add_argument(
        "--workers",
        type=int,
        default=config.workers,
        help="Worker processes for `sweep`. Default: one per CPU."
    )
    parser.add_argument(
        "--config",
        type=str,
        help="Path to config file. If set, it will take precedence over the default ones, which are "
             "`~/.structbound` and `[application path]/defaults.conf`."
    )

    # Boolean optional arguments
    bool_group = parser.add_argument_group("Boolean arguments")
    add_boolean_argument(bool_group, config, "verbose", "Logs progress.")
    add_boolean_argument(bool_group, config, "debug", "Logs everything and prints per-function timings.")

    # Other arguments
    parser.add_argument("--version", action="version", version=__version__)

    return parser


def configure_logging(verbose: bool, debug: bool):
    level = logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def print_error(error: Exception, exit_code: int):
    from structbound.errors import StructboundError
    from structbound.output import dumps_json

    if isinstance(error, StructboundError):
        diagnostic = error.to_dict()
    else:
        diagnostic = {"error": error.__class__.__name__, "message": str(error), "exit_code": exit_code}
    print(dumps_json(diagnostic), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    from structbound.config import Config
    from structbound.core import Simulation
    from structbound.errors import StructboundError
    from structbound.output import get_formatter, summary_table

    colorama.init(autoreset=True)

    config = Config.from_default_files()
    parser = init_parser(config)
    args = parser.parse_args(argv)

    if args.config:
        # If issued a config file, we need to re-init the parser because
        # the default values may have changed.
        config = Config.from_file(args.config)
        parser = init_parser(config)
        args = parser.parse_args(argv)

    config.update(**args.__dict__)
    configure_logging(config.verbose, config.debug)
    start_time = time.monotonic()

    if args.debug:
        utils.TIMING_ENABLED = True

    try:
        simulation = Simulation.from_file(
            args.scenario,
            config=config,
            overrides={"time.dt": args.dt, "time.t_end": args.t_end},
        )
        if args.command == "run":
            summary = simulation.run()
        elif args.command == "sweep":
            summary = simulation.sweep(args.ktilde)
        elif args.command == "converge":
            summary = simulation.converge(args.levels)
        elif args.command == "respond":
            summary = simulation.respond()
        else:
            summary = simulation.energy_audit()
    except StructboundError as e:
        print_error(e, e.exit_code)
        return e.exit_code
    except OSError as e:
        print_error(e, 2)
        return 2
    elapsed_time = time.monotonic() - start_time

    print(f"{Fore.GREEN}{args.command}{Fore.RESET} {summary['scenario']}: artifacts in {simulation.out_dir}")
    table = summary_table(summary)
    if table.columns:
        print(get_formatter("ansi").render(table), end="")

    if args.debug:
        for funcname, executions, timing in utils.summarize_timing():
            print("{:40} {:20} {:30} {}".format(
                funcname,
                f"{executions} executions",
                f"average={round(timing / executions, 10)} s",
                f"total={round(timing, 10)} s",
            ))
        print()
        print(f"Total time: {round(elapsed_time, 10)} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
