"""Single-parameter exponential family primitives.

Every distribution is identified by its mean. Two families are supported:
Bernoulli and unit-variance Gaussian. All logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BERNOULLI_EDGE = 1e-9


class DomainError(ValueError):
    """A mean outside the admissible range of its family."""


@dataclass(frozen=True)
class Bernoulli:
    name: str = "bernoulli"

    @property
    def lo(self) -> float:
        return BERNOULLI_EDGE

    @property
    def hi(self) -> float:
        return 1.0 - BERNOULLI_EDGE

    def check(self, m: float) -> float:
        if not 0.0 < m < 1.0:
            raise DomainError(f"Bernoulli mean {m!r} outside (0, 1)")
        return m

    def clamp(self, m: float) -> float:
        return min(max(m, self.lo), self.hi)

    def kl(self, m1: float, m2: float) -> float:
        out = 0.0
        if m1 > 0.0:
            out += m1 * math.log(m1 / m2)
        if m1 < 1.0:
            out += (1.0 - m1) * math.log((1.0 - m1) / (1.0 - m2))
        return max(out, 0.0)

    def sample(self, rng: np.random.Generator, mean: float, size: int) -> np.ndarray:
        return (rng.random(size) < mean).astype(float)


@dataclass(frozen=True)
class Gaussian:
    """Unit-variance Gaussian with means restricted to ``[lo, hi]``."""

    lo: float = -10.0
    hi: float = 10.0
    name: str = "gaussian"

    def check(self, m: float) -> float:
        if not (self.lo <= m <= self.hi) or math.isnan(m):
            raise DomainError(f"Gaussian mean {m!r} outside [{self.lo}, {self.hi}]")
        return m

    def clamp(self, m: float) -> float:
        return min(max(m, self.lo), self.hi)

    def kl(self, m1: float, m2: float) -> float:
        d = m1 - m2
        return 0.5 * d * d

    def sample(self, rng: np.random.Generator, mean: float, size: int) -> np.ndarray:
        return mean + rng.standard_normal(size)


Family = Bernoulli | Gaussian


def family_from_name(name: str) -> Family:
    key = name.lower()
    if key in ("bernoulli", "bern"):
        return Bernoulli()
    if key in ("gaussian", "normal", "gauss"):
        return Gaussian()
    raise ValueError(f"unknown family {name!r}")


def kl(family: Family, m1: float, m2: float) -> float:
    """KL divergence between the family members with means ``m1`` and ``m2``."""
    family.check(m1)
    family.check(m2)
    return family.kl(m1, m2)


def weighted_infimizer(lambda1: float, m1: float, lambda2: float, m2: float) -> float:
    """Minimiser over x of ``lambda1*KL(m1, x) + lambda2*KL(m2, x)``: the weighted mean."""
    total = lambda1 + lambda2
    if lambda1 < 0 or lambda2 < 0 or total <= 0:
        raise ValueError(f"degenerate weights ({lambda1}, {lambda2})")
    x = (lambda1 * m1 + lambda2 * m2) / total
    # keep the convex combination inside [min, max] despite rounding
    return min(max(x, min(m1, m2)), max(m1, m2))


def _index(family: Family, lambda1: float, m1: float, lambda2: float, m2: float) -> float:
    if lambda1 <= 0.0 or lambda2 <= 0.0 or m1 == m2:
        return 0.0
    x = weighted_infimizer(lambda1, m1, lambda2, m2)
    return lambda1 * family.kl(m1, x) + lambda2 * family.kl(m2, x)


def weighted_index(family: Family, lambda1: float, m1: float, lambda2: float, m2: float) -> float:
    """Value of ``inf_x lambda1*KL(m1, x) + lambda2*KL(m2, x)``.

    Zero when either weight is zero or the means coincide. Nondecreasing in
    both weights.
    """
    if lambda1 < 0 or lambda2 < 0:
        raise ValueError(f"negative weights ({lambda1}, {lambda2})")
    family.check(m1)
    family.check(m2)
    return _index(family, lambda1, m1, lambda2, m2)


def _bisect_branch(family: Family, m_hat: float, n: float, level: float, edge: float) -> float:
    if level <= 0.0:
        return m_hat
    if n * family.kl(m_hat, edge) <= level:
        return edge
    # bisect down to adjacent doubles; the branch can be very steep near an edge
    inside, outside = m_hat, edge
    for _ in range(2000):
        mid = 0.5 * (inside + outside)
        if mid == inside or mid == outside:
            break
        if n * family.kl(m_hat, mid) <= level:
            inside = mid
        else:
            outside = mid
    return inside


def kl_upper_confidence(family: Family, m_hat: float, n: float, level: float) -> float:
    """Largest x with ``n*KL(m_hat, x) <= level``, clamped to the family's upper edge."""
    if n <= 0:
        raise ValueError(f"sample count must be positive, got {n}")
    if level < 0:
        raise ValueError(f"level must be nonnegative, got {level}")
    family.check(m_hat)
    return _bisect_branch(family, m_hat, n, level, family.hi)


def kl_lower_confidence(family: Family, m_hat: float, n: float, level: float) -> float:
    """Smallest x with ``n*KL(m_hat, x) <= level``, clamped to the family's lower edge."""
    if n <= 0:
        raise ValueError(f"sample count must be positive, got {n}")
    if level < 0:
        raise ValueError(f"level must be nonnegative, got {level}")
    family.check(m_hat)
    return _bisect_branch(family, m_hat, n, level, family.lo)
