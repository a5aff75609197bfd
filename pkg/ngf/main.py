"""Command-line entry point: `python -m ngf.main <command> ...`."""

from __future__ import annotations

import argparse
import logging
import logging.config
import sys
from pathlib import Path
from typing import Optional, Sequence

from ngf.commands import datasets as datasets_commands
from ngf.commands import experiments as experiment_commands
from ngf.commands import graph as graph_commands
from ngf.errors import ConfigError, NGFError
from ngf.utils.config import LOG_CONFIG

log = logging.getLogger("ngf")


class _Parser(argparse.ArgumentParser):
    # usage errors are config errors (exit 1), not argparse's exit 2
    def error(self, message: str):
        raise ConfigError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ngf", description="Neighborhood graph filters and graph filter experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    parser.add_argument("--log-config", help="logging ini file (default: NGF_LOG_CONFIG)")
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    graph_commands.register(subparsers)
    experiment_commands.register(subparsers)
    datasets_commands.register(subparsers)
    return parser


def configure_logging(path: Optional[str], verbose: bool = False, quiet: bool = False) -> None:
    config = Path(path) if path else LOG_CONFIG
    if config.is_file():
        logging.config.fileConfig(config, disable_existing_loggers=False)
    elif path:
        raise ConfigError(f"logging config {path} not found")
    else:
        logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                            format="%(levelname)-5.5s [%(name)s] %(message)s")
        log.setLevel(logging.INFO)
    if verbose:
        log.setLevel(logging.DEBUG)
    elif quiet:
        log.setLevel(logging.WARNING)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run one command, and map failures to exit codes (1 config, 2 runtime)."""
    try:
        args = build_parser().parse_args(argv)
        configure_logging(args.log_config, args.verbose, args.quiet)
        return args.handler(args)
    except SystemExit as exc:
        # --help
        return exc.code if isinstance(exc.code, int) else 0
    except NGFError as exc:
        print(f"error: {exc.detail}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
