"""Repeat the desk pipeline over several seeds and tabulate the headline numbers.

Useful for checking that the qualitative trends are not an artefact of seed 0.

    python3 scripts/seed_sweep.py --seeds 0 1 2 --out runs/sweep
"""

import argparse
import dataclasses
from pathlib import Path

from xensemble.harness import COMMANDS, PIPELINE_ORDER, ExperimentConfig, Run, load_config
from xensemble.harness.pipeline import BEST_KAPPA, NO_DEFENSE, OUTPUT_ONLY


def headline(run: Run) -> dict:
    avg = {r["defense"]: r["DSR"] for r in run.table("defense").where(source="attack-average")}
    best_single = max(v for k, v in avg.items() if k.startswith("single-"))
    ood = run.table("ood").where(defense=BEST_KAPPA, source="all")[0]
    threat = {r["mode"]: r["DSR"] for r in run.table("threat").rows}
    return {
        "best-kappa": avg[BEST_KAPPA], "output-only": avg[OUTPUT_ONLY], "no-defense": avg[NO_DEFENSE],
        "best-single": best_single, "ood-AUROC": ood["AUROC"], "ood-DError": ood["DError"],
        **{f"threat:{m}": v for m, v in sorted(threat.items())},
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    base = load_config(args.config) if args.config else ExperimentConfig()
    rows = {}
    for seed in args.seeds:
        cfg = dataclasses.replace(base, seed=seed, out_dir=str(Path(args.out) / f"seed-{seed}"))
        for name in PIPELINE_ORDER:
            COMMANDS[name](cfg, workers=args.workers)
        rows[seed] = headline(Run(cfg))
        print(f"seed {seed} done")

    keys = list(next(iter(rows.values())))
    print("metric".ljust(18) + "".join(f"seed {s:<5}" for s in rows))
    for k in keys:
        print(k.ljust(18) + "".join(f"{rows[s][k]:<10.3f}" for s in rows))


if __name__ == "__main__":
    main()
