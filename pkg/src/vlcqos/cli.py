"""Command-line entry point: ``vlcqos <experiment> [--config PATH] [--out PATH]``.

Exit codes: 0 on success, 1 on a config error, 2 when validation fails.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import __version__
from .experiments import (EXPERIMENTS, RUNNERS, ConfigError, ExperimentSpec, load_config,
                          parse_config, validation_failed)

log = logging.getLogger("vlcqos")

EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION = 0, 1, 2


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlcqos", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=RUNNERS[name].__name__.replace("_", " "))
        p.add_argument("--config", type=Path, help="INI config file (defaults are used if omitted)")
        p.add_argument("--out", type=Path, help="output CSV path (stdout if omitted)")
        p.add_argument("--seed", type=_u64, help="override the [sim] seed")
        p.add_argument("--threads", type=_positive_int, default=1,
                       help="worker processes for sweep points (default 1)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        spec = load_config(args.config, args.experiment) if args.config \
            else parse_config("", args.experiment)
        if args.seed is not None:
            spec = dataclasses.replace(spec, seed=args.seed)
        if args.out is not None:
            spec = dataclasses.replace(spec, out=str(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    log.info("running %s (spec %s)", spec.experiment, spec.digest())
    table = RUNNERS[spec.experiment](spec, threads=args.threads)
    text = table.to_csv(spec)
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text)
    if spec.experiment == "validate" and validation_failed(table):
        for row in table.rows:
            if row[2] != "PASS":
                print(f"check {row[0]} failed: {row[3]}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK
