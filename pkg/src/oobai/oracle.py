"""Lower-bound allocation problems with offline data.

``solve_P2`` is the nested bisection: an outer bisection on the best arm's
online count ``n1`` driven by the sign of the derivative of the convex
objective ``n1 + sum_a max(0, N_a(n1))``, and an inner root search for each
``N_a(n1)``. ``solve_P1`` is the same solver at the ``log(1/(2.4 delta))``
threshold with expected offline counts. ``eval_V`` and ``solve_P3`` handle the
normalised max-min form (offline fraction ``z`` and online proportions ``w``).

Means are referred to by arm index; the constraints are always anchored at a
designated best arm, which need not be arm 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .spef import Family, _index, weighted_infimizer

log = logging.getLogger(__name__)

INFINITE_COUNT = 1e9
DEFAULT_EPSILON = 1e-6


class SolverError(RuntimeError):
    """Raised when the range search for the best arm's count does not terminate."""


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True)
class BanditInstance:
    family: Family
    means: tuple[float, ...]

    def __post_init__(self) -> None:
        means = tuple(float(m) for m in self.means)
        object.__setattr__(self, "means", means)
        if len(means) < 2:
            raise ValueError("need at least two arms")
        for m in means:
            self.family.check(m)
        top = max(means)
        if sum(1 for m in means if m == top) > 1:
            raise ValueError(f"best arm is not unique in {means}")

    @property
    def K(self) -> int:
        return len(self.means)

    @property
    def best_arm(self) -> int:
        return int(np.argmax(self.means))

    @property
    def gaps(self) -> np.ndarray:
        means = np.asarray(self.means)
        return means.max() - means


@dataclass(frozen=True)
class OfflineDataset:
    """Per-arm offline sample counts and reward sums."""

    counts: tuple[int, ...]
    reward_sums: tuple[float, ...]

    def __post_init__(self) -> None:
        counts = tuple(int(c) for c in self.counts)
        sums = tuple(float(s) for s in self.reward_sums)
        if len(counts) != len(sums):
            raise ValueError("counts and reward_sums differ in length")
        if any(c < 0 for c in counts):
            raise ValueError(f"negative offline count in {counts}")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "reward_sums", sums)

    @classmethod
    def empty(cls, K: int) -> OfflineDataset:
        return cls((0,) * K, (0.0,) * K)

    @classmethod
    def from_rewards(cls, rewards: Sequence[Sequence[float]]) -> OfflineDataset:
        return cls(tuple(len(r) for r in rewards), tuple(float(np.sum(r)) for r in rewards))

    @property
    def K(self) -> int:
        return len(self.counts)

    @property
    def tau1(self) -> int:
        return sum(self.counts)

    def means(self) -> list[float | None]:
        return [s / c if c > 0 else None for c, s in zip(self.counts, self.reward_sums)]

    def proportions(self) -> np.ndarray:
        if self.tau1 == 0:
            raise ValueError("no offline samples")
        return np.asarray(self.counts, dtype=float) / self.tau1


@dataclass(frozen=True)
class SolverConfig:
    threshold: float
    epsilon: float = DEFAULT_EPSILON
    max_doublings: int = 200

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")

    @classmethod
    def for_p2(cls, delta: float, **kw) -> SolverConfig:
        return cls(p2_threshold(delta), **kw)

    @classmethod
    def for_p1(cls, delta: float, **kw) -> SolverConfig:
        return cls(p1_threshold(delta), **kw)


@dataclass(frozen=True)
class NormalizedSolution:
    z: float
    w: np.ndarray


@dataclass
class OptimalityReport:
    active_set_A1: list[int]
    tight_zero_set_A2: list[int]
    ratio_sum_A1: float
    ratio_sum_A: float
    max_constraint_violation: float
    residuals: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.max_constraint_violation <= 1e-4


def p1_threshold(delta: float) -> float:
    _check_delta(delta)
    return math.log(1.0 / (2.4 * delta))


def p2_threshold(delta: float) -> float:
    _check_delta(delta)
    l = math.log(1.0 / delta)
    return l + math.log(l)


def _check_delta(delta: float) -> None:
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


# ---------------------------------------------------------------------------
# numerical core


def _pooled_root(family: Family, lam_other: float, m_other: float, m_self: float, target: float) -> float | None:
    """Pooled weight ``lam`` with ``index(lam_other, m_other, lam, m_self) == target``.

    The index is concave and increasing in ``lam``, starts at 0 and tends to
    ``lam_other * KL(m_other, m_self)``; None when that limit is ``<= target``.
    Newton iterates from 0 approach the root monotonically from below, which
    doubles as the lower end of a bisection bracket if progress stalls.
    """
    if target <= 0.0:
        return 0.0
    if lam_other <= 0.0 or lam_other * family.kl(m_other, m_self) <= target:
        return None
    tol = 1e-12 * target
    lam = 0.0
    for _ in range(200):
        x = (lam_other * m_other + lam * m_self) / (lam_other + lam)
        f = lam_other * family.kl(m_other, x) + lam * family.kl(m_self, x)
        gap = target - f
        if gap <= tol:
            return lam
        slope = family.kl(m_self, x)
        step = gap / slope if slope > 0 else math.inf
        if not math.isfinite(step) or step <= 1e-16 * max(lam, 1.0):
            break
        lam += step
    return _bisect_root(family, lam_other, m_other, m_self, target, lam)


def _bisect_root(family: Family, lam_other: float, m_other: float, m_self: float, target: float, lo: float) -> float:
    hi = max(2.0 * lo, 1.0)
    for _ in range(2000):
        if _index(family, lam_other, m_other, hi, m_self) >= target:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise SolverError("inner root search failed to bracket")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _index(family, lam_other, m_other, mid, m_self) < target:
            lo = mid
        else:
            hi = mid
    return hi


class _Allocation:
    """P2-type problem over pooled counts, anchored at ``best``.

    Offline counts are reals so the same machinery serves expected counts (P1)
    and scaled proportions (``eval_V``).
    """

    def __init__(self, family: Family, means: Sequence[float], best: int, offline: Sequence[float], threshold: float, epsilon: float = DEFAULT_EPSILON, max_doublings: int = 200):
        self.family = family
        self.means = [float(m) for m in means]
        self.best = best
        self.offline = [float(c) for c in offline]
        self.threshold = threshold
        self.epsilon = epsilon
        self.max_doublings = max_doublings
        self.others = [a for a in range(len(self.means)) if a != best]
        m1 = self.means[best]
        self.kl_best = {a: family.kl(m1, self.means[a]) for a in self.others}

    def feasible(self, n1: float) -> bool:
        lam1 = self.offline[self.best] + n1
        return all(lam1 * self.kl_best[a] > self.threshold for a in self.others)

    def n_a(self, a: int, n1: float) -> float | None:
        lam1 = self.offline[self.best] + n1
        lam = _pooled_root(self.family, lam1, self.means[self.best], self.means[a], self.threshold)
        return None if lam is None else lam - self.offline[a]

    def ratio(self, a: int, n1: float, na: float) -> float:
        m1, ma = self.means[self.best], self.means[a]
        lam1 = self.offline[self.best] + n1
        lama = self.offline[a] + na
        x = weighted_infimizer(lam1, m1, lama, ma)
        den = self.family.kl(ma, x)
        return self.family.kl(m1, x) / den if den > 0 else math.inf

    def profile(self, n1: float) -> dict[int, float] | None:
        out = {}
        for a in self.others:
            na = self.n_a(a, n1)
            if na is None:
                return None
            out[a] = na
        return out

    def gradient(self, n1: float, exclude: int | None = None) -> float | None:
        """Right derivative of the objective; None when ``n1`` is infeasible."""
        prof = self.profile(n1)
        if prof is None:
            return None
        return 1.0 - sum(self.ratio(a, n1, na) for a, na in prof.items() if na > 0 and a != exclude)

    def objective(self, n1: float) -> float | None:
        prof = self.profile(n1)
        if prof is None:
            return None
        return n1 + sum(max(0.0, na) for na in prof.values())

    def kink(self, a: int) -> float | None:
        """``n1`` at which ``N_a(n1)`` crosses zero, if any."""
        lam_a = self.offline[a]
        lam1 = _pooled_root(self.family, lam_a, self.means[a], self.means[self.best], self.threshold)
        if lam1 is None:
            return None
        return lam1 - self.offline[self.best]

    def solve_n1(self) -> tuple[float, int | None]:
        """Optimal ``n1`` and, if the optimum sits on a kink, the arm pinned to zero."""
        if self.feasible(0.0):
            g0 = self.gradient(0.0)
            if g0 is not None and g0 >= 0.0:
                return 0.0, None
        for a in self.others:
            r = self.kink(a)
            if r is None or r <= 0.0 or not self.feasible(r):
                continue
            right = self.gradient(r, exclude=a)
            if right is None or right < 0.0:
                continue
            left = right - self.ratio(a, r, 0.0)
            if left <= 0.0:
                return r, a

        lo, hi = 0.0, 1.0
        for _ in range(self.max_doublings):
            g = self.gradient(hi)
            if g is not None and g > 0.0:
                break
            lo, hi = hi, 2.0 * hi
        else:
            raise SolverError(f"no valid range for n1 after {self.max_doublings} doublings (threshold unreachable?)")
        while hi - lo > self.epsilon:
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                break
            g = self.gradient(mid)
            if g is None or g <= 0.0:
                lo = mid
            else:
                hi = mid
        return hi, None

    def solve(self) -> np.ndarray:
        alloc = np.zeros(len(self.means))
        if self.threshold <= 0.0:
            return alloc
        n1, pinned = self.solve_n1()
        alloc[self.best] = n1
        prof = self.profile(n1)
        assert prof is not None
        for a, na in prof.items():
            alloc[a] = 0.0 if a == pinned else max(0.0, na)
        return alloc


def _problem(instance: BanditInstance, offline_counts: Sequence[float], config: SolverConfig) -> _Allocation:
    if len(offline_counts) != instance.K:
        raise ValueError("offline counts and instance differ in length")
    return _Allocation(instance.family, instance.means, instance.best_arm, offline_counts, config.threshold, config.epsilon, config.max_doublings)


def _counts(offline: OfflineDataset | Sequence[float]) -> list[float]:
    if isinstance(offline, OfflineDataset):
        return [float(c) for c in offline.counts]
    return [float(c) for c in offline]


def allocate(family: Family, means: Sequence[float], best: int, offline_counts: Sequence[float], threshold: float, epsilon: float = DEFAULT_EPSILON) -> np.ndarray:
    """P2 at arbitrary (possibly tied or empirical) means, anchored at ``best``."""
    return _Allocation(family, means, best, offline_counts, threshold, epsilon).solve()


# ---------------------------------------------------------------------------
# public operations


def index_Z(instance: BanditInstance, offline: OfflineDataset | Sequence[float], alloc: Sequence[float], a: int, b: int) -> float:
    """Pooled two-arm index between arms ``a`` and ``b``."""
    if a == b:
        raise ValueError("index needs two distinct arms")
    counts = _counts(offline)
    lam_a = counts[a] + float(alloc[a])
    lam_b = counts[b] + float(alloc[b])
    return _index(instance.family, lam_a, instance.means[a], lam_b, instance.means[b])


def solve_Na_given_N1(instance: BanditInstance, offline: OfflineDataset | Sequence[float], a: int, n1: float, config: SolverConfig) -> float | None:
    """Online count of arm ``a`` making its constraint tight at best-arm count ``n1``.

    May be negative when the offline data over-satisfies the constraint. None
    when no finite count reaches the threshold.
    """
    if a == instance.best_arm:
        raise ValueError("arm a must differ from the best arm")
    return _problem(instance, _counts(offline), config).n_a(a, n1)


def objective_gradient_at(instance: BanditInstance, offline: OfflineDataset | Sequence[float], n1: float, config: SolverConfig) -> float | None:
    """Derivative of ``n1 + sum_a max(0, N_a(n1))``; None means infeasible, increase ``n1``."""
    return _problem(instance, _counts(offline), config).gradient(n1)


def objective_value_at(instance: BanditInstance, offline: OfflineDataset | Sequence[float], n1: float, config: SolverConfig) -> float | None:
    return _problem(instance, _counts(offline), config).objective(n1)


def solve_P2(instance: BanditInstance, offline: OfflineDataset | Sequence[float], config: SolverConfig) -> np.ndarray:
    """Minimum total online allocation meeting every pooled index constraint."""
    return _problem(instance, _counts(offline), config).solve()


def solve_P1(instance: BanditInstance, expected_offline_counts: Sequence[float], delta: float, epsilon: float = DEFAULT_EPSILON) -> tuple[np.ndarray, float]:
    counts = []
    for c in expected_offline_counts:
        c = float(c)
        if not math.isfinite(c) or c < 0:
            raise ValueError(f"expected offline counts must be finite and nonnegative, got {c}")
        if c >= INFINITE_COUNT:
            log.warning("offline count %g treated as effectively infinite", c)
        counts.append(c)
    alloc = solve_P2(instance, counts, SolverConfig.for_p1(delta, epsilon=epsilon))
    return alloc, float(alloc.sum())


def check_optimality(instance: BanditInstance, offline: OfflineDataset | Sequence[float], alloc: Sequence[float], config: SolverConfig, tol: float = 1e-6) -> OptimalityReport:
    """Residuals of the optimality conditions for a candidate allocation.

    Constraint residuals are relative to ``max(1, threshold)``. An arm with zero
    allocation counts as tight when its residual is within ``tol``.
    """
    counts = _counts(offline)
    alloc = [float(x) for x in alloc]
    best = instance.best_arm
    thr = config.threshold
    scale = max(1.0, thr)
    prob = _problem(instance, counts, config)
    A1, A2 = [], []
    ratios = {}
    infeas = tight = 0.0
    for a in prob.others:
        z = index_Z(instance, counts, alloc, best, a)
        infeas = max(infeas, (thr - z) / scale)
        lam1 = counts[best] + alloc[best]
        lama = counts[a] + alloc[a]
        if lam1 > 0 and lama > 0:
            ratios[a] = prob.ratio(a, alloc[best], alloc[a])
        if alloc[a] > 0:
            A1.append(a)
            tight = max(tight, abs(z - thr) / scale)
        elif abs(z - thr) / scale <= tol:
            A2.append(a)
    sum_A1 = sum(ratios[a] for a in A1)
    sum_A = sum_A1 + sum(ratios.get(a, 0.0) for a in A2)
    ratio_hi = max(0.0, sum_A1 - 1.0)
    ratio_lo = max(0.0, 1.0 - sum_A) if alloc[best] > 0 else 0.0
    residuals = {"infeasibility": max(infeas, 0.0), "tightness": tight, "ratio_sum_A1_excess": ratio_hi, "ratio_sum_A_deficit": ratio_lo}
    return OptimalityReport(A1, A2, sum_A1, sum_A, max(residuals.values()), residuals)


def _min_index(family: Family, means: Sequence[float], best: int, lam: Sequence[float]) -> float:
    return min(_index(family, lam[best], means[best], lam[j], means[j]) for j in range(len(means)) if j != best)


def eval_V(instance: BanditInstance, z: float, p: Sequence[float], rtol: float = 1e-13) -> tuple[float, np.ndarray]:
    """Max over online proportions ``w`` of the smallest index at weights ``z*p + (1-z)*w``.

    For a trial value ``v`` the cheapest online mass that lifts every index to
    ``v`` is a P2 solve with offline counts ``z*p`` and threshold ``v``; the
    answer is the largest ``v`` whose mass fits in ``1 - z``.
    """
    if not 0.0 <= z <= 1.0:
        raise ValueError(f"z must lie in [0, 1], got {z}")
    p = np.asarray(p, dtype=float)
    if p.shape != (instance.K,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("p must be a probability vector over the arms")
    fam, means, best, K = instance.family, instance.means, instance.best_arm, instance.K
    uniform = np.full(K, 1.0 / K)
    if z >= 1.0:
        return _min_index(fam, means, best, p), uniform
    budget = 1.0 - z
    offline = z * p
    lo = _min_index(fam, means, best, offline + budget * uniform)
    hi = min(fam.kl(means[best], means[j]) for j in range(K) if j != best) * (offline[best] + budget)
    eps = 1e-14

    def excess(v: float) -> float:
        return _Allocation(fam, means, best, offline, v, eps).solve().sum() - budget

    if hi > lo * (1 + rtol) and excess(hi) < 0:
        lo = hi
    elif hi > lo * (1 + rtol) and excess(lo) < 0:
        # uniform weights reach lo, so excess(lo) >= 0 only by rounding: lo is optimal
        lo = brentq(excess, lo, hi, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps), maxiter=200)
    alloc = _Allocation(fam, means, best, offline, lo, eps).solve()
    total = alloc.sum()
    w = alloc / total if total > 0 else uniform
    return float(lo), w


def solve_P3(instance: BanditInstance, p: Sequence[float] | None, tau1: float, delta: float) -> NormalizedSolution:
    """Largest offline fraction ``z`` with ``V(z) >= z*c/tau1``, c the P2 threshold."""
    c = p2_threshold(delta)
    if tau1 <= 0:
        p0 = np.full(instance.K, 1.0 / instance.K) if p is None else p
        return NormalizedSolution(0.0, eval_V(instance, 0.0, p0)[1])
    if p is None:
        raise ValueError("offline proportions required when tau1 > 0")

    def slack(z: float) -> float:
        return eval_V(instance, z, p)[0] - z * c / tau1

    if slack(1.0) >= 0.0:
        z = 1.0
    else:
        z = brentq(slack, 0.0, 1.0, xtol=1e-15, rtol=1e-13, maxiter=200)
    return NormalizedSolution(float(z), eval_V(instance, z, p)[1])


def allocation_from_normalized(sol: NormalizedSolution, tau1: float) -> np.ndarray:
    """Online counts implied by ``(z, w)``: ``w * tau1 * (1/z - 1)``."""
    if sol.z <= 0:
        raise ValueError("z = 0 carries no scale information")
    return np.asarray(sol.w) * tau1 * (1.0 / sol.z - 1.0)
