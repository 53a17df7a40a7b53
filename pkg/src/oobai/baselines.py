"""Comparison algorithms: o-o LUCB, artificial replay and o-o UCB for regret."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .oracle import BanditInstance, OfflineDataset
from .rewards import RewardSource
from .spef import Gaussian, kl_lower_confidence, kl_upper_confidence
from .tas import DEFAULT_MAX_STEPS, BatchTrackAndStop, BudgetExhausted, RunResult, empirical_best

HOEFFDING = "hoeffding"
KL = "kl"


class UnsupportedFamily(ValueError):
    pass


def lucb_confidence_radius(t: int, tau1: int, delta: float, K: int) -> float:
    """Exploration level C(tau1 + t, delta) shared by every arm's confidence interval."""
    if t < 1:
        raise ValueError("t must be at least 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if K < 2:
        raise ValueError("need K >= 2")
    inner = math.log(K * (tau1 + t) ** 2 / delta)
    return inner + math.log(1.0 + inner)


def _variance_proxy(family) -> float:
    # sub-Gaussian variance: 1/4 for rewards in [0, 1], 1 for unit-variance Gaussians
    return 1.0 if isinstance(family, Gaussian) else 0.25


@dataclass
class LucbState:
    t: int
    counts: list[int]
    means: list[float]
    upper: list[float]
    lower: list[float]
    leader: int
    challenger: int
    B: float


def _lucb_bounds(family, index_family: str, means, n, level):
    if index_family == HOEFFDING:
        # sqrt(C / 2n) for [0, 1] rewards; the Gaussian analogue is sqrt(2C / n)
        r = np.sqrt(2.0 * _variance_proxy(family) * level / n)
        return means + r, means - r
    up = [kl_upper_confidence(family, family.clamp(m), c, level) for m, c in zip(means, n)]
    lo = [kl_lower_confidence(family, family.clamp(m), c, level) for m, c in zip(means, n)]
    return np.array(up), np.array(lo)


def lucb_run(instance: BanditInstance, offline: OfflineDataset | None, delta: float, index_family: str = HOEFFDING, seed: int | None = None, *, rewards: Callable[[int], float] | None = None, max_steps: int = DEFAULT_MAX_STEPS) -> RunResult:
    """LUCB on pooled offline and online samples; pulls leader and challenger each round."""
    if index_family not in (HOEFFDING, KL):
        raise ValueError(f"unknown index family {index_family!r}")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    K, family = instance.K, instance.family
    offline = offline if offline is not None else OfflineDataset.empty(K)
    if rewards is None:
        rewards = RewardSource(family, instance.means, seed).online
    off_n = np.asarray(offline.counts, dtype=float)
    sums = np.asarray(offline.reward_sums, dtype=float).copy()
    counts = np.zeros(K, dtype=int)
    for a in range(K):
        sums[a] += rewards(a)
        counts[a] += 1
    t = K
    while True:
        n = off_n + counts
        means = sums / n
        level = lucb_confidence_radius(t, offline.tau1, delta, K)
        upper, lower = _lucb_bounds(family, index_family, means, n, level)
        leader = empirical_best(means)
        masked = upper.copy()
        masked[leader] = -np.inf
        challenger = int(np.argmax(masked))
        B = upper[challenger] - lower[leader]
        if B < 0:
            break
        if t >= max_steps:
            raise BudgetExhausted(f"no decision after {max_steps} online samples", LucbState(t, counts.tolist(), means.tolist(), upper.tolist(), lower.tolist(), leader, challenger, float(B)))
        for a in (leader, challenger):
            sums[a] += rewards(a)
            counts[a] += 1
        t += 2
    return RunResult(t, leader, leader == instance.best_arm, counts.tolist(), extra={"B": float(B)})


class ReplayBuffer:
    """Per-arm FIFO queues of unconsumed offline rewards."""

    def __init__(self, samples: Sequence[Sequence[float]]):
        self._queues = [deque(float(x) for x in arm) for arm in samples]
        self.tau1 = sum(len(q) for q in self._queues)
        self.consumed = [0] * len(self._queues)

    def remaining(self, arm: int) -> int:
        return len(self._queues[arm])

    def pop(self, arm: int) -> float | None:
        q = self._queues[arm]
        if not q:
            return None
        self.consumed[arm] += 1
        return q.popleft()


def artificial_replay_run(instance: BanditInstance, offline_samples: Sequence[Sequence[float]], delta: float, seed: int | None = None, *, base_factory: Callable[[], object] | None = None, rewards: Callable[[int], float] | None = None, max_steps: int = DEFAULT_MAX_STEPS) -> RunResult:
    """Serve the base sampler's requests from offline data while it lasts.

    ``base_factory`` builds a sampler exposing ``next_arm``, ``observe`` and
    ``should_stop`` (by default a purely-online Batch Track-and-Stop). Only
    fresh samples count towards ``stop_time``.
    """
    if len(offline_samples) != instance.K:
        raise ValueError("need one offline reward list per arm")
    if rewards is None:
        rewards = RewardSource(instance.family, instance.means, seed).online
    if base_factory is None:
        base = BatchTrackAndStop(instance.family, instance.K, None, delta)
    else:
        base = base_factory()
    buffer = ReplayBuffer(offline_samples)
    fresh = [0] * instance.K
    while not base.should_stop():
        if sum(fresh) >= max_steps:
            raise BudgetExhausted(f"no decision after {max_steps} online samples", base)
        arm = base.next_arm()
        x = buffer.pop(arm)
        if x is None:
            x = rewards(arm)
            fresh[arm] += 1
        base.observe(arm, x)
    rec = base.recommendation()
    extra = {"replayed": list(buffer.consumed), "fresh": list(fresh), "base_samples": base.t}
    return RunResult(sum(fresh), rec, rec == instance.best_arm, fresh, extra=extra)


@dataclass
class RegretBatch:
    """Sub-optimal pulls and regret for a batch of o-o UCB runs, at each checkpoint."""

    horizons: list[int]
    pulls: np.ndarray  # (checkpoints, trials, K), online pulls only
    regret: np.ndarray  # (checkpoints, trials)
    gaps: np.ndarray = field(repr=False, default=None)

    def mean_pulls(self, arm: int) -> np.ndarray:
        return self.pulls[:, :, arm].mean(axis=1)


_REFILL = 4096


def oo_ucb_regret_batch(instance: BanditInstance, offline_counts: Sequence[int], horizons: Sequence[int], seeds: Sequence[int]) -> RegretBatch:
    """o-o UCB with index ``mean + sqrt(4 log t / (N0 + N))`` for many seeds at once.

    The index does not involve the horizon, so one pass up to ``max(horizons)``
    yields every checkpoint. Trial ``i`` draws from ``RewardSource(seeds[i])``:
    its offline prefix first, then online rewards, so each trial matches
    :func:`oo_ucb_regret_run` with the same seed.
    """
    if not isinstance(instance.family, Gaussian):
        raise UnsupportedFamily("o-o UCB is defined for unit-variance Gaussian arms only")
    K = instance.K
    horizons = sorted(int(h) for h in horizons)
    T = horizons[-1]
    if horizons[0] < K:
        raise ValueError("horizon must be at least K")
    off_n = np.asarray(offline_counts, dtype=float)
    if off_n.shape != (K,) or np.any(off_n < 0):
        raise ValueError("need one nonnegative offline count per arm")
    M = len(seeds)
    sources = [RewardSource(instance.family, instance.means, s) for s in seeds]
    sums = np.array([[src.offline.take(a, int(off_n[a])).sum() for a in range(K)] for src in sources])
    buf = np.array([[src.online.take(a, _REFILL) for a in range(K)] for src in sources])
    ptr = np.zeros((M, K), dtype=int)
    counts = np.zeros((M, K), dtype=int)
    rows = np.arange(M)
    gaps = instance.gaps
    out_pulls, out_regret = [], []

    def pull(arms):
        nonlocal buf
        r = buf[rows, arms, ptr[rows, arms]]
        ptr[rows, arms] += 1
        counts[rows, arms] += 1
        sums[rows, arms] += r
        full = np.argwhere(ptr >= _REFILL)
        for m, a in full:
            buf[m, a] = sources[m].online.take(a, _REFILL)
            ptr[m, a] = 0

    checkpoints = set(horizons)
    for t in range(1, T + 1):
        if t <= K:
            pull(np.full(M, t - 1))
        else:
            n = off_n + counts
            index = sums / n + np.sqrt(4.0 * math.log(t) / n)
            pull(np.argmax(index, axis=1))
        if t in checkpoints:
            out_pulls.append(counts.copy())
            out_regret.append(counts @ gaps)
    return RegretBatch(horizons, np.array(out_pulls), np.array(out_regret), gaps)


def oo_ucb_regret_run(instance: BanditInstance, offline_counts: Sequence[int], horizon: int, seed: int) -> tuple[list[int], float]:
    """Per-arm online pulls and cumulative regret of one o-o UCB run."""
    batch = oo_ucb_regret_batch(instance, offline_counts, [horizon], [seed])
    return batch.pulls[0, 0].tolist(), float(batch.regret[0, 0])
