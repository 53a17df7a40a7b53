#!/usr/bin/env python3
"""Sub-optimal pulls of o-o UCB against log T, with and without offline samples of the worse arm."""

import argparse
import math

import numpy as np

from oobai import BanditInstance, Gaussian
from oobai.baselines import oo_ucb_regret_batch
from oobai.harness import child_seed


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--gap", type=float, default=0.5)
    ap.add_argument("--horizons", type=int, nargs="+", default=[1000, 10_000, 100_000])
    ap.add_argument("--seed", type=int, default=20240611)
    args = ap.parse_args()
    inst = BanditInstance(Gaussian(), (args.gap, 0.0))
    seeds = [child_seed(args.seed, k) for k in range(args.trials)]
    bare = oo_ucb_regret_batch(inst, [0, 0], args.horizons, seeds).mean_pulls(1)
    slope = np.polyfit(np.log(args.horizons), bare, 1)[0]
    T = max(args.horizons)
    n2 = math.ceil(8 * math.log(T) / args.gap**2)
    warm = oo_ucb_regret_batch(inst, [0, n2], [T], seeds).mean_pulls(1)[0]
    for h, m in zip(args.horizons, bare):
        print(f"T={h:<8d} mean sub-optimal pulls {m:.1f}")
    print(f"slope vs log T {slope:.2f}  (8/gap^2 = {8 / args.gap**2:.1f})")
    print(f"with {n2} offline samples of arm 2: {warm:.2f} pulls at T={T}")


if __name__ == "__main__":
    main()
