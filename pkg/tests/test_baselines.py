import math

import numpy as np
import pytest

from oobai import BanditInstance, Bernoulli, Gaussian, OfflineDataset
from oobai.baselines import (
    HOEFFDING,
    KL,
    ReplayBuffer,
    UnsupportedFamily,
    artificial_replay_run,
    lucb_confidence_radius,
    lucb_run,
    oo_ucb_regret_batch,
    oo_ucb_regret_run,
)
from oobai.rewards import RewardSource
from oobai.tas import BatchTrackAndStop, run

BERN4 = BanditInstance(Bernoulli(), (0.7, 0.5, 0.4, 0.2))
G2 = BanditInstance(Gaussian(), (1.0, 0.0))


class TestRadius:
    def test_example(self):
        # K * (tau1 + t)^2 / delta = e
        delta = 2 / math.e
        assert lucb_confidence_radius(1, 0, delta, 2) == pytest.approx(1 + math.log(2))

    def test_monotone(self):
        vals = [lucb_confidence_radius(t, 10, 0.05, 4) for t in (1, 2, 10, 1000)]
        assert vals == sorted(vals)
        vals = [lucb_confidence_radius(10, 0, d, 4) for d in (0.5, 0.1, 0.01)]
        assert vals == sorted(vals)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            lucb_confidence_radius(0, 0, 0.1, 2)
        with pytest.raises(ValueError):
            lucb_confidence_radius(1, 0, 0.1, 1)


class TestLucb:
    def test_separated_stops_at_first_check(self):
        inst = BanditInstance(Bernoulli(), (0.95, 0.05))
        src = RewardSource(inst.family, inst.means, 0)
        off = OfflineDataset.from_rewards([src.offline.take(0, 5000), src.offline.take(1, 5000)])
        res = lucb_run(inst, off, 0.05, rewards=src.online)
        assert res.stop_time == inst.K
        assert res.correct

    @pytest.mark.parametrize("family", [HOEFFDING, KL])
    def test_runs_and_deterministic(self, family):
        a = lucb_run(BERN4, None, 0.1, family, seed=4)
        b = lucb_run(BERN4, None, 0.1, family, seed=4)
        assert a == b
        assert a.stop_time == sum(a.final_counts)
        assert (a.stop_time - BERN4.K) % 2 == 0

    def test_kl_tighter_than_hoeffding(self):
        h = np.mean([lucb_run(BERN4, None, 0.1, HOEFFDING, seed=s).stop_time for s in range(5)])
        k = np.mean([lucb_run(BERN4, None, 0.1, KL, seed=s).stop_time for s in range(5)])
        assert k < h

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            lucb_run(BERN4, None, 0.1, "bernstein", seed=0)

    def test_coverage_at_stop(self):
        from oobai.baselines import _lucb_bounds

        misses = 0
        trials = 30
        for s in range(trials):
            res = lucb_run(BERN4, None, 0.1, seed=s)
            n = np.asarray(res.final_counts, dtype=float)
            src = RewardSource(BERN4.family, BERN4.means, s).online
            # replay the same per-arm streams to rebuild the final sums
            sums = np.array([src.take(a, int(n[a])).sum() for a in range(4)])
            level = lucb_confidence_radius(res.stop_time, 0, 0.1, 4)
            up, lo = _lucb_bounds(BERN4.family, HOEFFDING, sums / n, n, level)
            misses += bool(np.any((np.asarray(BERN4.means) > up) | (np.asarray(BERN4.means) < lo)))
        assert misses / trials <= 0.1


class TestReplay:
    def test_buffer_fifo(self):
        buf = ReplayBuffer([[1.0, 2.0], []])
        assert buf.tau1 == 2
        assert buf.pop(0) == 1.0
        assert buf.pop(0) == 2.0
        assert buf.pop(0) is None
        assert buf.pop(1) is None
        assert buf.consumed == [2, 0]

    def test_empty_buffer_matches_base(self):
        res = artificial_replay_run(BERN4, [[], [], [], []], 0.1, seed=3)
        base = run(BERN4, None, 0.1, 3)
        assert res.stop_time == base.stop_time
        assert res.final_counts == base.final_counts
        assert res.recommended_arm == base.recommended_arm

    def test_accounting(self):
        src = RewardSource(G2.family, G2.means, 1)
        samples = [src.offline.take(0, 40).tolist(), src.offline.take(1, 5).tolist()]
        res = artificial_replay_run(G2, samples, 0.01, rewards=src.online)
        # every request is served once, either from the buffer or fresh
        assert sum(res.extra["replayed"]) + res.stop_time == res.extra["base_samples"]
        assert res.extra["replayed"][1] == 5
        assert res.extra["replayed"][0] <= 40

    def test_buffer_exhaustion_goes_online(self):
        src = RewardSource(G2.family, G2.means, 2)
        res = artificial_replay_run(G2, [[0.5] * 3, [0.1] * 3], 0.01, rewards=src.online)
        assert res.extra["replayed"] == [3, 3]
        assert all(f > 0 for f in res.extra["fresh"])

    def test_custom_base(self):
        made = []

        def factory():
            s = BatchTrackAndStop(G2.family, 2, None, 0.05)
            made.append(s)
            return s

        artificial_replay_run(G2, [[], []], 0.05, seed=0, base_factory=factory)
        assert len(made) == 1

    def test_wrong_arity(self):
        with pytest.raises(ValueError):
            artificial_replay_run(G2, [[]], 0.05, seed=0)


class TestRegret:
    U2 = BanditInstance(Gaussian(), (0.5, 0.0))

    def test_bookkeeping(self):
        pulls, regret = oo_ucb_regret_run(self.U2, [0, 0], 500, 3)
        assert sum(pulls) == 500
        assert regret == pytest.approx(pulls[1] * 0.5)

    def test_single_matches_batch(self):
        b = oo_ucb_regret_batch(self.U2, [0, 0], [200, 500], [3, 4])
        pulls, _ = oo_ucb_regret_run(self.U2, [0, 0], 500, 4)
        assert b.pulls[1, 1].tolist() == pulls
        assert b.pulls[0].sum(axis=1).tolist() == [200, 200]

    def test_duplicate_optimum_no_regret(self):
        inst = BanditInstance(Gaussian(), (0.5, 0.5 - 1e-12, 0.0))
        b = oo_ucb_regret_batch(inst, [0, 0, 0], [300], [0])
        gaps = inst.gaps
        assert b.regret[0, 0] == pytest.approx(b.pulls[0, 0] @ gaps)
        assert b.pulls[0, 0, 1] * gaps[1] < 1e-8

    def test_offline_suppresses_suboptimal_pulls(self):
        T = 5000
        n2 = int(math.ceil(8 * math.log(T) / 0.25)) + 1
        with_off = oo_ucb_regret_batch(self.U2, [0, n2], [T], range(20)).mean_pulls(1)[0]
        without = oo_ucb_regret_batch(self.U2, [0, 0], [T], range(20)).mean_pulls(1)[0]
        assert with_off <= 2.0
        assert with_off < 0.1 * without

    def test_non_gaussian_rejected(self):
        with pytest.raises(UnsupportedFamily):
            oo_ucb_regret_run(BERN4, [0] * 4, 100, 0)

    def test_horizon_too_short(self):
        with pytest.raises(ValueError):
            oo_ucb_regret_run(self.U2, [0, 0], 1, 0)
