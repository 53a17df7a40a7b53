#!/usr/bin/env python3
"""LUCB against Batch TaS on the 10-arm Bernoulli instance, uniform or exclude-best offline data."""

import argparse
import dataclasses
from pathlib import Path

from oobai.harness import ExperimentConfig, OfflinePolicy, run_sweep

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--policy", choices=["uniform", "uniform_exclude_best"], default="uniform")
    ap.add_argument("--algorithms", nargs="+", default=["tas", "lucb-h"])
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--output-dir", default="results/lucb")
    args = ap.parse_args()
    cfg = ExperimentConfig.load(CONFIGS / "bernoulli10_lucb.yaml")
    cfg = dataclasses.replace(
        cfg,
        trials=args.trials,
        offline_policy=OfflinePolicy(args.policy),
        algorithms=tuple(args.algorithms),
        jobs=args.jobs,
        output_dir=args.output_dir,
        name=f"bernoulli10_{args.policy}",
    )
    res = run_sweep(cfg, flags=vars(args))
    by_cell = {(a.algorithm, a.tau1): a.mean_stop_time for a in res.aggregates}
    print(f"{'tau1':>6} " + " ".join(f"{a:>10}" for a in cfg.algorithms) + "   lucb-h/tas")
    for tau1 in cfg.offline_sizes:
        row = [by_cell[(a, tau1)] for a in cfg.algorithms]
        ratio = ""
        if "tas" in cfg.algorithms and "lucb-h" in cfg.algorithms:
            ratio = f"{by_cell[('lucb-h', tau1)] / by_cell[('tas', tau1)]:.2f}"
        print(f"{tau1:>6} " + " ".join(f"{v:>10.1f}" for v in row) + f"   {ratio}")


if __name__ == "__main__":
    main()
