"""Run the whole desk pipeline for one config and print the summary table.

    python3 scripts/run_desk.py --config configs/desk.json --out runs/desk
"""

import argparse
import dataclasses
import time

from xensemble.harness import COMMANDS, PIPELINE_ORDER, ExperimentConfig, Run, load_config
from xensemble.harness.reports import render


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = dataclasses.replace(cfg, out_dir=args.out, **({} if args.seed is None else {"seed": args.seed}))
    for name in PIPELINE_ORDER:
        t0 = time.perf_counter()
        COMMANDS[name](cfg, workers=args.workers)
        print(f"{name:<15} {time.perf_counter() - t0:7.1f}s")
    print(render(Run(cfg).table("summary"), "table"))


if __name__ == "__main__":
    main()
