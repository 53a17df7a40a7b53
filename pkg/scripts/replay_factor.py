#!/usr/bin/env python3
"""Online samples of artificial replay against offline-aware TaS.

Two Gaussian arms with gap ``--gap``; the best arm comes with a large offline
buffer. Replay wraps a purely-online TaS; the offline-aware TaS uses the same
buffer as pooled counts. The ratio of mean online samples is printed.
"""

import argparse

import numpy as np

from oobai import BanditInstance, Gaussian, OfflineDataset
from oobai.baselines import artificial_replay_run
from oobai.harness import child_seed
from oobai.rewards import RewardSource
from oobai.tas import run


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--delta", type=float, default=1e-3)
    ap.add_argument("--gap", type=float, default=1.0)
    ap.add_argument("--buffer", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=20240611)
    args = ap.parse_args()
    inst = BanditInstance(Gaussian(), (args.gap, 0.0))
    replay, oo = [], []
    for k in range(args.trials):
        seed = child_seed(args.seed, k)
        src = RewardSource(inst.family, inst.means, seed)
        buf = src.offline.take(0, args.buffer)
        replay.append(artificial_replay_run(inst, [buf.tolist(), []], args.delta, rewards=src.online).stop_time)
        src = RewardSource(inst.family, inst.means, seed)
        oo.append(run(inst, OfflineDataset.from_rewards([buf, np.empty(0)]), args.delta, rewards=src.online).stop_time)
    print(f"replay mean {np.mean(replay):.1f}  oo-TaS mean {np.mean(oo):.1f}  ratio {np.mean(replay) / np.mean(oo):.3f}")


if __name__ == "__main__":
    main()
