"""Batch Track-and-Stop with GLRT stopping on pooled offline and online data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .oracle import BanditInstance, OfflineDataset, SolverError, allocate, p2_threshold
from .rewards import RewardSource
from .spef import Family, _index

DEFAULT_MAX_STEPS = 10_000_000
# target threshold used when re-solving for the tracked proportions
RESOLVE_P2 = "p2"  # log(1/delta) + log log(1/delta)
RESOLVE_BETA = "beta"  # the current stopping threshold


class BudgetExhausted(RuntimeError):
    """The online step cap was hit before the stopping rule fired."""

    def __init__(self, message: str, state: object):
        super().__init__(message)
        self.state = state


@dataclass
class RunResult:
    stop_time: int
    recommended_arm: int
    correct: bool
    final_counts: list[int]
    trace: list[tuple[int, int, float, float]] | None = None
    extra: dict = field(default_factory=dict)


def beta_threshold(t_total: int, delta: float, K: int) -> float:
    """GLRT stopping threshold at total (offline + online) sample count ``t_total``."""
    if t_total < 1:
        raise ValueError("t_total must be at least 1")
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if K < 2:
        raise ValueError("need K >= 2")
    base = math.log((K - 1) / delta)
    mid = math.log(max(t_total / 2.0, 1.0)) + 1.0
    return base + 6.0 * math.log(mid) + 8.0 * math.log(1.0 + base)


def track_select(w, online_counts) -> int:
    """``argmax_a w_a / N_a``; lowest index wins ties."""
    best, best_ratio = 0, -math.inf
    for a, (wa, na) in enumerate(zip(w, online_counts)):
        r = wa / na
        if r > best_ratio:
            best, best_ratio = a, r
    return best


def empirical_best(means) -> int:
    best = 0
    for a in range(1, len(means)):
        if means[a] > means[best]:
            best = a
    return best


def _is_square(n: int) -> bool:
    r = math.isqrt(n)
    return r * r == n


class BatchTrackAndStop:
    """Sampler state for one run.

    Drive it with ``next_arm`` / ``observe`` pairs (or ``step``) until
    ``should_stop``. The first K requests pull each arm once.

    Attributes mirror the algorithm's state: ``t`` online samples so far,
    ``counts``/``sums`` online per-arm tallies, ``w`` the tracked running
    average, ``w_hat`` the current target proportions and ``explore_count``
    the number of forced-exploration steps since the last re-solve.
    """

    def __init__(self, family: Family, K: int, offline: OfflineDataset | None, delta: float, epsilon: float = 1e-6, resolve: str = RESOLVE_P2):
        if not 0.0 < delta < 1.0:
            raise ValueError("delta must lie in (0, 1)")
        if resolve not in (RESOLVE_P2, RESOLVE_BETA):
            raise ValueError(f"unknown re-solve threshold {resolve!r}")
        self.resolve = resolve
        self.family = family
        self.K = K
        self.offline = offline if offline is not None else OfflineDataset.empty(K)
        if self.offline.K != K:
            raise ValueError("offline data has the wrong number of arms")
        self.delta = delta
        self.epsilon = epsilon
        self.resolve_threshold = p2_threshold(delta)
        self.tau1 = self.offline.tau1
        self.t = 0
        self.counts = [0] * K
        self.sums = [0.0] * K
        self.uniform = [1.0 / K] * K
        self.w = list(self.uniform)
        self.w_hat = list(self.uniform)
        self.explore_count = 0
        self.solver_calls = 0
        self._pending: tuple | None = None

    # -- statistics

    def pooled_counts(self) -> list[float]:
        return [n0 + n for n0, n in zip(self.offline.counts, self.counts)]

    def pooled_means(self) -> list[float]:
        out = []
        for n0, s0, n, s in zip(self.offline.counts, self.offline.reward_sums, self.counts, self.sums):
            total = n0 + n
            m = (s0 + s) / total if total > 0 else 0.0
            out.append(self.family.clamp(m))
        return out

    def stopping_statistic(self) -> tuple[float, int]:
        means = self.pooled_means()
        lam = self.pooled_counts()
        best = empirical_best(means)
        value = min(_index(self.family, lam[best], means[best], lam[b], means[b]) for b in range(self.K) if b != best)
        return value, best

    def threshold(self) -> float:
        return beta_threshold(self.tau1 + self.t, self.delta, self.K)

    def should_stop(self) -> bool:
        if self.t < self.K:
            return False
        return self.stopping_statistic()[0] >= self.threshold()

    def recommendation(self) -> int:
        return empirical_best(self.pooled_means())

    # -- sampling

    def _target(self) -> list[float]:
        means = self.pooled_means()
        best = empirical_best(means)
        self.solver_calls += 1
        thr = self.resolve_threshold if self.resolve == RESOLVE_P2 else self.threshold()
        try:
            alloc = allocate(self.family, means, best, self.offline.counts, thr, self.epsilon)
        except SolverError:
            # tied empirical best: no finite allocation separates the arms
            return list(self.uniform)
        total = float(alloc.sum())
        if total <= 0.0:
            return list(self.uniform)
        return [float(x) / total for x in alloc]

    def _plan(self) -> tuple[int, list[float], list[float], int]:
        t, K = self.t, self.K
        w_hat, count = self.w_hat, self.explore_count
        if _is_square(t // K):
            count += 1
            mix = self.uniform
            if count % K == 0:
                w_hat = self._target()
                count = 0
        else:
            mix = w_hat
        w = [(t * wa + ma) / (t + 1) for wa, ma in zip(self.w, mix)]
        return track_select(w, self.counts), w, w_hat, count

    def next_arm(self) -> int:
        if self.t < self.K:
            self._pending = None
            return self.t
        arm, w, w_hat, count = self._plan()
        self._pending = (arm, w, w_hat, count)
        return arm

    def observe(self, arm: int, reward: float) -> None:
        if self.t >= self.K:
            if self._pending is None or self._pending[0] != arm:
                raise RuntimeError("observe() must follow next_arm() for the same arm")
            _, self.w, self.w_hat, self.explore_count = self._pending
        self._pending = None
        self.counts[arm] += 1
        self.sums[arm] += float(reward)
        self.t += 1

    def step(self, reward_oracle: Callable[[int], float]) -> int:
        arm = self.next_arm()
        reward = reward_oracle(arm)
        self.observe(arm, reward)
        return arm


def run(instance: BanditInstance, offline: OfflineDataset | None, delta: float, seed: int | None = None, *, rewards: Callable[[int], float] | None = None, max_steps: int = DEFAULT_MAX_STEPS, trace: bool = False, epsilon: float = 1e-6, resolve: str = RESOLVE_P2, on_step: Callable[[BatchTrackAndStop], None] | None = None) -> RunResult:
    """Run Batch Track-and-Stop on ``instance`` until the GLRT fires."""
    if rewards is None:
        rewards = RewardSource(instance.family, instance.means, seed).online
    sampler = BatchTrackAndStop(instance.family, instance.K, offline, delta, epsilon, resolve)
    rows = [] if trace else None
    arm = -1
    while True:
        if sampler.t >= instance.K:
            stat, _ = sampler.stopping_statistic()
            thr = sampler.threshold()
            if rows is not None:
                rows.append((sampler.t, arm, stat, thr))
            if stat >= thr:
                break
        if sampler.t >= max_steps:
            raise BudgetExhausted(f"no decision after {max_steps} online samples", sampler)
        arm = sampler.step(rewards)
        if on_step is not None:
            on_step(sampler)
    rec = sampler.recommendation()
    return RunResult(sampler.t, rec, rec == instance.best_arm, list(sampler.counts), rows, {"solver_calls": sampler.solver_calls})
