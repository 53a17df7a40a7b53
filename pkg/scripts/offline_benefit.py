#!/usr/bin/env python3
"""Stopping time against offline sample size on the 3-arm Gaussian instance.

Runs the uniform and exclude-best sweeps and prints a mean-stop-time table.
Pass ``--algorithms tas tas-beta`` to compare the two re-solve thresholds.
"""

import argparse
import dataclasses
from pathlib import Path

from oobai.harness import ExperimentConfig, run_sweep

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--delta", type=float, default=None)
    ap.add_argument("--algorithms", nargs="+", default=["tas"])
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--output-dir", default="results/offline_benefit")
    args = ap.parse_args()
    for name in ("gaussian3_uniform", "gaussian3_exclude_best"):
        cfg = ExperimentConfig.load(CONFIGS / f"{name}.yaml")
        changes = dict(trials=args.trials, algorithms=tuple(args.algorithms), jobs=args.jobs, output_dir=args.output_dir)
        if args.delta is not None:
            changes["delta"] = args.delta
        cfg = dataclasses.replace(cfg, **changes)
        res = run_sweep(cfg, flags=vars(args))
        print(f"# {name}  delta={cfg.delta}  trials={cfg.trials}")
        for a in res.aggregates:
            print(f"{a.algorithm:<9} tau1={a.tau1:<6d} mean={a.mean_stop_time:9.1f}  q10={a.q10:9.1f}  q90={a.q90:9.1f}  error={a.error_rate:.3f}")


if __name__ == "__main__":
    main()
