"""Command-line entry point.

Exit status: 0 success, 2 configuration error, 3 data error, 4 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .._accel import set_threads
from ..balance import EbConvergenceError
from ..geodesy import ProjectionError
from ..ingest import SchemaError
from ..kre.grid import OutsideMapError
from ..mixed import RankDeficientError
from ..outcome import SeparationError
from .commands import (DataError, SolverError, cmd_effects, cmd_map, cmd_report, cmd_simulate,
                       write_manifest)
from .config import ConfigError, RunConfig, documented_keys, load_config

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4

COMMANDS = {"simulate": cmd_simulate, "map": cmd_map, "effects": cmd_effects, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="commute-effects",
                                description="Commuting-time maps and balanced dose-response curves.")
    p.add_argument("--config", type=Path, help="flat key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--threads", type=int, help="numba worker threads")
    p.add_argument("--out-dir", type=Path, default=Path("out"), help="output directory (default: out)")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "map", "effects", "report", "all"):
        sub.add_parser(name)
    sub.add_parser("keys", help="print every configuration key with its default")
    return p


def make_config(args: argparse.Namespace) -> RunConfig:
    overrides = list(args.set)
    if args.seed is not None:
        overrides.append(f"seed = {args.seed}")
    if args.threads is not None:
        overrides.append(f"threads = {args.threads}")
    cfg = load_config(args.config, overrides)
    cfg.out_dir = args.out_dir
    return cfg


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "keys":
        sys.stdout.write(documented_keys())
        return EXIT_OK
    try:
        cfg = make_config(args)
        set_threads(cfg["threads"])
        stages = ["simulate", "map", "effects", "report"] if args.command == "all" else [args.command]
        status = EXIT_OK
        for stage in stages:
            status = max(status, COMMANDS[stage](cfg))
        return status
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SchemaError, OutsideMapError, ProjectionError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (SolverError, EbConvergenceError, SeparationError, RankDeficientError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        if args.out_dir.exists():
            write_manifest(args.out_dir)
        return EXIT_SOLVER


def main(argv: list[str] | None = None) -> None:
    sys.exit(run(argv))


__all__ = ["EXIT_CONFIG", "EXIT_DATA", "EXIT_OK", "EXIT_SOLVER", "build_parser", "main", "run"]
