import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oobai import BanditInstance, Bernoulli, Gaussian, OfflineDataset
from oobai.rewards import ArmStreams, RewardSource
from oobai.tas import BatchTrackAndStop, BudgetExhausted, beta_threshold, empirical_best, run, track_select
from tracking import TrackingMonitor

GAUSS3 = BanditInstance(Gaussian(), (0.5, 0.4, 0.4))
BERN10 = BanditInstance(Bernoulli(), (0.9, 0.85, 0.8, 0.75, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2))


class TestBeta:
    def test_example(self):
        assert beta_threshold(2, math.exp(-1), 2) == pytest.approx(1 + 8 * math.log(2))

    def test_middle_term_vanishes(self):
        base = math.log(1 / 0.1) + 8 * math.log(1 + math.log(1 / 0.1))
        assert beta_threshold(2, 0.1, 2) == pytest.approx(base)
        assert beta_threshold(1, 0.1, 2) == pytest.approx(base)

    def test_monotone(self):
        ts = [1, 2, 3, 10, 100, 10**4, 10**7]
        for K in (2, 5):
            vals = [beta_threshold(t, 0.05, K) for t in ts]
            assert vals == sorted(vals)
            ds = [0.5, 0.1, 1e-2, 1e-5]
            assert [beta_threshold(100, d, K) for d in ds] == sorted(beta_threshold(100, d, K) for d in ds)

    @pytest.mark.parametrize("args", [(0, 0.1, 2), (5, 0.0, 2), (5, 1.0, 2), (5, 0.1, 1)])
    def test_bad_args(self, args):
        with pytest.raises(ValueError):
            beta_threshold(*args)


class TestTrackSelect:
    def test_full_tie(self):
        assert track_select([1 / 3] * 3, [4, 4, 4]) == 0

    def test_examples(self):
        assert track_select([0.9, 0.1], [9, 2]) == 0
        assert track_select([0.5, 0.5], [10, 2]) == 1

    def test_empirical_best_ties(self):
        assert empirical_best([0.3, 0.7, 0.7]) == 1


class TestStoppingStatistic:
    def _sampler(self, family, K, off_counts, off_sums):
        return BatchTrackAndStop(family, K, OfflineDataset(tuple(off_counts), tuple(off_sums)), 0.1)

    def test_equal_means(self):
        s = self._sampler(Gaussian(), 2, [5, 5], [1.0, 1.0])
        assert s.stopping_statistic()[0] == 0.0

    def test_gaussian_example(self):
        s = self._sampler(Gaussian(), 2, [10, 10], [10.0, -10.0])
        value, best = s.stopping_statistic()
        assert best == 0
        assert value == pytest.approx(10.0)

    def test_min_over_others(self):
        s = self._sampler(Gaussian(), 3, [10, 10, 10], [0.0, 5.0, 10.0])
        value, best = s.stopping_statistic()
        assert best == 2
        # arm 1 is the closer competitor
        assert value == pytest.approx(10 * 10 / 20 * 0.5**2 / 2)


class TestSchedule:
    def _drive(self, K, steps, seed=3):
        s = BatchTrackAndStop(Gaussian(), K, None, 0.05)
        src = ArmStreams(Gaussian(), [0.5] + [0.0] * (K - 1), np.random.SeedSequence(seed))
        log = []
        for _ in range(steps):
            before = (s.t, list(s.w_hat), s.solver_calls, s.explore_count)
            s.step(src)
            log.append(before + (list(s.w_hat), s.solver_calls, s.explore_count))
        return s, log

    def test_initialization(self):
        s, _ = self._drive(3, 3)
        assert s.counts == [1, 1, 1]
        assert s.w == pytest.approx([1 / 3] * 3)
        assert s.solver_calls == 0

    def test_exploration_blend_at_t_equals_K(self):
        K = 3
        s, _ = self._drive(K, K)
        w_before = list(s.w)
        arm = s.next_arm()
        # t = K: floor(t/K) = 1 is a square, so U_K is blended in
        assert s._pending[1] == pytest.approx([(K * a + 1 / K) / (K + 1) for a in w_before])
        s.observe(arm, 0.0)
        assert s.explore_count == 1

    def test_resolve_every_K_boundaries(self):
        K = 3
        _, log = self._drive(K, 200)
        for t, w_hat0, calls0, count0, w_hat1, calls1, count1 in log:
            if t < K:
                continue
            boundary = math.isqrt(t // K) ** 2 == t // K
            if not boundary:
                assert w_hat1 == w_hat0
                assert calls1 == calls0
            elif count0 + 1 == K:
                assert calls1 == calls0 + 1
                assert count1 == 0
            else:
                assert calls1 == calls0
                assert count1 == count0 + 1

    def test_observe_requires_matching_arm(self):
        s, _ = self._drive(2, 2)
        arm = s.next_arm()
        with pytest.raises(RuntimeError):
            s.observe(1 - arm, 0.0)

    def test_tied_means_fall_back_to_uniform(self):
        s = BatchTrackAndStop(Gaussian(), 2, OfflineDataset((3, 3), (0.0, 0.0)), 0.05)
        assert s._target() == [0.5, 0.5]


class TestRun:
    def test_tracking_bound_every_step(self):
        for seed in range(6):
            mon = TrackingMonitor()
            res = run(GAUSS3, None, 0.1, seed, on_step=mon)
            assert mon.violations == 0
            assert mon.steps == res.stop_time

    def test_tracking_bound_with_offline(self):
        src = RewardSource(Bernoulli(), BERN10.means, 11)
        off = OfflineDataset.from_rewards([src.offline.take(a, 30) for a in range(10)])
        mon = TrackingMonitor()
        res = run(BERN10, off, 0.05, rewards=src.online, on_step=mon)
        assert mon.violations == 0
        assert res.stop_time >= BERN10.K

    @given(st.integers(0, 10**6), st.sampled_from([0.2, 0.05]))
    def test_tracking_property(self, seed, delta):
        inst = BanditInstance(Gaussian(), (0.0, -0.8, -1.0))
        mon = TrackingMonitor()
        run(inst, None, delta, seed, on_step=mon)
        assert mon.violations == 0

    def test_solver_calls_sqrt(self):
        res = run(GAUSS3, None, 0.1, 5)
        T = res.stop_time
        assert res.extra["solver_calls"] <= math.isqrt(T // GAUSS3.K) + 1

    def test_deterministic(self):
        a = run(BERN10, None, 0.05, 7, trace=True)
        b = run(BERN10, None, 0.05, 7, trace=True)
        assert a == b
        assert a.trace[-1][2] >= a.trace[-1][3]
        assert all(row[2] < row[3] for row in a.trace[:-1])

    def test_abundant_offline_stops_early(self):
        src = RewardSource(Gaussian(), GAUSS3.means, 2)
        off = OfflineDataset.from_rewards([src.offline.take(a, 100_000) for a in range(3)])
        res = run(GAUSS3, off, 0.05, rewards=src.online)
        assert res.stop_time <= 2 * GAUSS3.K
        assert res.correct

    def test_budget_exhausted(self):
        with pytest.raises(BudgetExhausted) as info:
            run(GAUSS3, None, 1e-3, 1, max_steps=50)
        assert info.value.state.t == 50

    def test_result_fields(self):
        res = run(BERN10, None, 0.05, 1)
        assert res.stop_time == sum(res.final_counts)
        assert 0 <= res.recommended_arm < 10
        assert res.correct == (res.recommended_arm == 0)

    @pytest.mark.slow
    def test_delta_correct_bernoulli(self):
        trials = 50
        errors = sum(not run(BERN10, None, 0.05, seed).correct for seed in range(trials))
        assert errors / trials <= 0.05 + 3 * math.sqrt(0.05 * 0.95 / trials)


class TestResolveThreshold:
    def test_invalid_value(self):
        with pytest.raises(ValueError):
            BatchTrackAndStop(Gaussian(), 2, None, 0.05, resolve="sometimes")

    def test_no_offline_identical(self):
        # without offline data the proportions do not depend on the threshold
        a = run(GAUSS3, None, 0.1, 4)
        b = run(GAUSS3, None, 0.1, 4, resolve="beta")
        assert a.stop_time == b.stop_time
        assert a.final_counts == b.final_counts

    def test_beta_threshold_avoids_starvation(self):
        inst = BanditInstance(Bernoulli(), (0.7, 0.5, 0.4))
        p2, beta = [], []
        for seed in range(4):
            src = RewardSource(inst.family, inst.means, seed)
            off = OfflineDataset.from_rewards([src.offline.take(a, 30) for a in range(3)])
            p2.append(run(inst, off, 0.1, rewards=RewardSource(inst.family, inst.means, seed).online).stop_time)
            beta.append(run(inst, off, 0.1, rewards=RewardSource(inst.family, inst.means, seed).online, resolve="beta").stop_time)
        assert np.mean(beta) < np.mean(p2)
