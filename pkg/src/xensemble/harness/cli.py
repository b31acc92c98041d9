"""``xensemble`` command line.

Exit codes: 0 success, 2 configuration error, 3 data/schema error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from typing import Optional, Sequence

from ..nncore import ShapeError
from ..synthdata import DatasetFormatError
from .config import ConfigError, DataError, ExperimentConfig, load_config
from .pipeline import COMMANDS
from .reports import render

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xensemble", description="Desk-scale input/model verification ensemble "
                                "experiments: data, model pool, attacks, defense, OOD and threat-model reports.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="experiment JSON (defaults to the built-in desk config)")
        s.add_argument("--out", help="run directory (overrides out_dir)")
        s.add_argument("--seed", type=_u64, help="global seed (overrides the config)")
        s.add_argument("--workers", type=_positive, default=1, help="worker processes for batch work")
        s.add_argument("--format", choices=("csv", "json", "table"), default="table",
                       help="how tables are echoed to standard output")
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out:
        changes["out_dir"] = args.out
    return dataclasses.replace(cfg, **changes) if changes else cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        tables = COMMANDS[args.command](cfg, cfg.out_dir, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DatasetFormatError, ShapeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    for t in tables:
        if args.format == "table":
            print(f"[{t.name}]")
        sys.stdout.write(render(t, args.format))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
