"""Seeded per-arm reward streams.

Each arm owns its own generator, so the k-th reward drawn from arm ``a`` is
fixed by the seed alone, whatever order the arms are pulled in. Offline and
online data use separate stream families spawned from the same seed.
"""

from __future__ import annotations

import numpy as np

from .spef import Family

_BLOCK = 4096


class ArmStreams:
    def __init__(self, family: Family, means, seed_seq: np.random.SeedSequence):
        self.family = family
        self.means = [float(m) for m in means]
        self._rngs = [np.random.default_rng(s) for s in seed_seq.spawn(len(self.means))]
        self._buf = [np.empty(0) for _ in self.means]
        self._pos = [0] * len(self.means)

    def _refill(self, arm: int, need: int) -> None:
        rest = self._buf[arm][self._pos[arm]:]
        size = max(_BLOCK, need)
        fresh = self.family.sample(self._rngs[arm], self.means[arm], size)
        self._buf[arm] = np.concatenate([rest, fresh])
        self._pos[arm] = 0

    def draw(self, arm: int) -> float:
        if self._pos[arm] >= len(self._buf[arm]):
            self._refill(arm, 1)
        x = self._buf[arm][self._pos[arm]]
        self._pos[arm] += 1
        return float(x)

    def take(self, arm: int, n: int) -> np.ndarray:
        if n <= 0:
            return np.empty(0)
        if len(self._buf[arm]) - self._pos[arm] < n:
            self._refill(arm, n)
        out = self._buf[arm][self._pos[arm]:self._pos[arm] + n].copy()
        self._pos[arm] += n
        return out

    __call__ = draw


class RewardSource:
    """Offline and online reward streams for one trial."""

    def __init__(self, family: Family, means, seed: int):
        off, on = np.random.SeedSequence(seed).spawn(2)
        self.offline = ArmStreams(family, means, off)
        self.online = ArmStreams(family, means, on)
