"""Command-line entry point: `solver <command> --config <path> ...`."""

import sys
from argparse import ArgumentParser, ArgumentTypeError
from collections.abc import Sequence
from pathlib import Path

from pydantic import ValidationError
from rich.markup import escape

from rschwarz.cli import commands
from rschwarz.cli.experiment_config import ExperimentConfig, describe_validation_error
from rschwarz.core.errors import ConfigError, NumericalError
from rschwarz.core.logging.logging import enable_logging, get_logger
from rschwarz.core.util.cli_helper import __version__, display_banner, err_console

logger = get_logger("cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMMANDS = ("spectrum", "offline", "online", "vanilla", "bench", "solution")
DEFAULT_OUT = {
    "spectrum": "spectrum.csv",
    "online": "online",
    "vanilla": "vanilla",
    "bench": "bench.csv",
    "solution": "solution.csv",
}


def _ranks(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ArgumentTypeError(f"ranks must be comma-separated integers: {text!r}") from e


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="solver",
        description="Reduced Schwarz solver for elliptic equations with rough media.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="JSON experiment config (defaults to the benchmark setup)")
    parser.add_argument("--out", type=Path, help="Output CSV path, or prefix for online/vanilla")
    parser.add_argument("--archive", type=Path, default=Path("maps.rswz"), help="Map archive path")
    parser.add_argument("--ranks", type=_ranks, default=[40, 70, 100, 130], help="Ranks for bench, e.g. 40,70")
    parser.add_argument("--repeat", type=int, default=1, help="Timing repeats; medians are reported")
    parser.add_argument("--patch", type=int, default=3, help="Patch index for spectrum")
    parser.add_argument("--boundary", type=Path, help="BND file overriding the configured boundary data")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable logging")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, dispatch the command and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        enable_logging(True)
        display_banner()
    out = args.out or Path(DEFAULT_OUT.get(args.command, "out"))
    try:
        config = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.benchmark()
        match args.command:
            case "spectrum":
                commands.cmd_spectrum(config, args.patch, out)
            case "offline":
                commands.cmd_offline(config, args.archive)
            case "online":
                commands.cmd_online(config, args.archive, out, args.boundary)
            case "vanilla":
                commands.cmd_vanilla(config, out, args.boundary)
            case "bench":
                commands.cmd_bench(config, args.ranks, out, args.repeat)
            case "solution":
                commands.cmd_solution(config, out, args.boundary)
    except ValidationError as e:
        err_console.print(f"[bold red]config error[/bold red]\n{escape(describe_validation_error(e))}")
        return EXIT_CONFIG
    except ConfigError as e:
        err_console.print(f"[bold red]config error[/bold red]\n{escape(str(e))}")
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error("Numerical failure", error=str(e))
        err_console.print(f"[bold red]numerical failure[/bold red]\n{escape(str(e))}")
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())
