import math

import numpy as np
import pytest

import decusum
from decusum import (ConfigurationError, Discrete, FusionPolicy, Gaussian,
                     RunConfig, Scenario, SensorModel, cusum_step,
                     run_batch, run_fractional_baseline, run_once)
from decusum.simulator import sample_path_trace

G0, G1 = Gaussian(0.0, 1.0), Gaussian(0.5, 1.0)


def gmodel(mu=0.125, h=2.0, d=0.0, theta=0.5):
    return SensorModel(pre=G0, post=Gaussian(theta, 1.0), mu=mu, h=h, d_local=d)


def scen(n=2, affected=(1,), gamma=1, **kw):
    return Scenario((gmodel(**kw),) * n, frozenset(affected), gamma)


class TestRunOnce:
    def test_immediate_crossing(self):
        # near-degenerate post: the first post-change draw is the high atom
        # with probability 0.999, so a tiny threshold stops at slot 1
        m = SensorModel(pre=Discrete((0.0, 1.0), (0.9, 0.1)),
                        post=Discrete((0.0, 1.0), (0.001, 0.999)),
                        mu=0.1, h=0.0, d_local=0.0)
        s = Scenario((m,), frozenset({1}), 1)
        cfg = RunConfig(s, FusionPolicy("max", 1e-9), cap=1000, seed=3)
        trace = run_once(cfg)
        assert trace.stop_slot == 1 and trace.fired

    def test_same_seed_same_trace(self):
        cfg = RunConfig(scen(), FusionPolicy("sum", 8.0), cap=100_000, seed=11)
        t1, t2 = run_once(cfg), run_once(cfg)
        assert t1.stop_slot == t2.stop_slot
        assert (t1.final_w == t2.final_w).all()
        assert (t1.samples_pre == t1.samples_pre).all()

    def test_censored_at_cap(self):
        cfg = RunConfig(scen(gamma=math.inf, affected=()), FusionPolicy("sum", 1e9),
                        cap=500, seed=1)
        t = run_once(cfg)
        assert t.censored and t.stop_slot == 500

    def test_counters_split_at_change_point(self):
        cfg = RunConfig(scen(gamma=40), FusionPolicy("sum", 6.0), cap=100_000, seed=5)
        t = run_once(cfg, debug=True)
        n_pre = min(t.stop_slot, 39)
        assert t.samples_pre.sum() == t.debug.sampled[:n_pre].sum()
        assert (t.samples_pre + t.samples_post == t.debug.sampled.sum(axis=0)).all()

    def test_transmission_implies_positive_statistic(self):
        cfg = RunConfig(scen(n=3, gamma=30), FusionPolicy("sum", 9.0), cap=50_000, seed=7)
        t = run_once(cfg, debug=True)
        d = 0.0
        transmitted = t.debug.w > d
        assert t.trans_pre.sum() + t.trans_post.sum() == transmitted.sum()
        assert (t.debug.w[transmitted] > 0).all()

    def test_debug_observations_only_on_sampled_slots(self):
        cfg = RunConfig(scen(n=2, gamma=math.inf, affected=(), mu=0.05),
                        FusionPolicy("max", 50.0), cap=2000, seed=13)
        t = run_once(cfg, debug=True)
        sampled = t.debug.sampled.astype(bool)
        assert np.isnan(t.debug.obs[~sampled]).all()
        assert not np.isnan(t.debug.obs[sampled]).any()

    def test_max_rule_threshold_must_clear_censoring(self):
        m = gmodel(d=2.0)
        with pytest.raises(ConfigurationError):
            RunConfig(Scenario((m,), frozenset(), math.inf), FusionPolicy("max", 1.5),
                      cap=10, seed=0)

    def test_initial_state_below_floor_rejected(self):
        with pytest.raises(ConfigurationError):
            RunConfig(scen(), FusionPolicy("sum", 5.0), cap=10, seed=0,
                      initial_states=(-3.0, 0.0))


class TestRunBatch:
    def test_single_run_equals_run_once(self):
        cfg = RunConfig(scen(), FusionPolicy("sum", 7.0), cap=100_000, seed=23)
        assert run_batch(cfg, 1)[0].stop_slot == run_once(cfg).stop_slot

    def test_worker_count_does_not_change_results(self):
        cfg = RunConfig(scen(n=3), FusionPolicy("max", 6.0), cap=50_000, seed=29)
        stops1 = [t.stop_slot for t in run_batch(cfg, 24, workers=1)]
        stops2 = [t.stop_slot for t in run_batch(cfg, 24, workers=2)]
        assert stops1 == stops2

    def test_runs_are_distinct(self):
        cfg = RunConfig(scen(), FusionPolicy("sum", 7.0), cap=100_000, seed=31)
        stops = {t.stop_slot for t in run_batch(cfg, 20)}
        assert len(stops) > 1

    def test_sensor_isolation(self):
        # changing sensor 2's detector parameters leaves sensor 1's sampled
        # observation sequence unchanged under the same seed
        base = Scenario((gmodel(mu=0.125), gmodel(mu=0.125)), frozenset(), math.inf)
        tweaked = Scenario((gmodel(mu=0.125), gmodel(mu=0.9, h=0.3)), frozenset(), math.inf)
        cfg1 = RunConfig(base, FusionPolicy("sum", math.inf), cap=2000, seed=37)
        cfg2 = RunConfig(tweaked, FusionPolicy("sum", math.inf), cap=2000, seed=37)
        t1, t2 = run_once(cfg1, debug=True), run_once(cfg2, debug=True)
        s1 = t1.debug.obs[:, 0][t1.debug.sampled[:, 0].astype(bool)]
        s2 = t2.debug.obs[:, 0][t2.debug.sampled[:, 0].astype(bool)]
        assert np.array_equal(s1, s2)

    def test_prechange_marginal_moments(self):
        cfg = RunConfig(scen(n=1, gamma=math.inf, affected=(), h=0.0),
                        FusionPolicy("max", math.inf), cap=20_000, seed=41)
        t = run_once(cfg, debug=True)
        obs = t.debug.obs[t.debug.sampled.astype(bool)]
        n = obs.size
        assert abs(obs.mean()) < 3.5 / math.sqrt(n)
        assert abs(obs.std(ddof=1) - 1.0) < 3.5 / math.sqrt(2 * n)


class TestBackendEquivalence:
    @pytest.mark.skipif(len(decusum.available_backends()) < 2,
                        reason="compiled backend not built")
    def test_backends_produce_identical_traces(self):
        cfg = RunConfig(scen(n=3, gamma=25), FusionPolicy("sum", 9.0), cap=20_000, seed=43)
        results = {}
        for backend in decusum.available_backends():
            decusum.set_backend(backend)
            try:
                results[backend] = run_once(cfg, debug=True)
            finally:
                decusum.set_backend("compiled" if "compiled" in decusum.available_backends()
                                    else "python")
        a, b = results["compiled"], results["python"]
        assert a.stop_slot == b.stop_slot
        assert np.array_equal(a.debug.w, b.debug.w)
        assert np.array_equal(a.debug.obs, b.debug.obs, equal_nan=True)
        assert np.array_equal(a.debug.fusion_stat, b.debug.fusion_stat)
        assert np.array_equal(a.max_skip_run, b.max_skip_run)

    @pytest.mark.skipif(len(decusum.available_backends()) < 2,
                        reason="compiled backend not built")
    def test_backends_identical_for_fractional_and_oracle(self):
        for rule, prob in (("fractional_sum", 0.5), ("oracle_cusum", None)):
            cfg = RunConfig(scen(n=2, gamma=30), FusionPolicy(rule, 7.0, prob),
                            cap=20_000, seed=47)
            stops = {}
            for backend in decusum.available_backends():
                decusum.set_backend(backend)
                try:
                    stops[backend] = run_once(cfg).stop_slot
                finally:
                    decusum.set_backend("compiled")
            assert stops["compiled"] == stops["python"]


class TestFractionalBaseline:
    def test_requires_fractional_rule(self):
        cfg = RunConfig(scen(), FusionPolicy("sum", 5.0), cap=100, seed=1)
        with pytest.raises(ConfigurationError):
            run_fractional_baseline(cfg, 2)

    def test_degenerate_coin_matches_sum_rule(self):
        # sampling_prob=1 with h=0, D=0 detectors is the plain sum rule
        s_frac = scen(n=3, gamma=20, h=0.0)
        cfg_frac = RunConfig(s_frac, FusionPolicy("fractional_sum", 10.0, 1.0),
                             cap=50_000, seed=53)
        cfg_sum = RunConfig(s_frac, FusionPolicy("sum", 10.0), cap=50_000, seed=53)
        stops_frac = [t.stop_slot for t in run_fractional_baseline(cfg_frac, 30)]
        stops_sum = [t.stop_slot for t in run_batch(cfg_sum, 30)]
        assert stops_frac == stops_sum

    def test_sample_fraction_matches_coin_bias(self):
        s = scen(n=2, gamma=math.inf, affected=(), h=0.0)
        cfg = RunConfig(s, FusionPolicy("fractional_sum", math.inf, 0.5), cap=4000, seed=59)
        traces = run_fractional_baseline(cfg, 30)
        total_slots = sum(t.stop_slot for t in traces)
        frac = sum(int(t.samples_pre.sum()) for t in traces) / (2 * total_slots)
        se = math.sqrt(0.25 / (2 * total_slots))
        assert abs(frac - 0.5) < 3 * se

    def test_transmissions_equal_samples(self):
        cfg = RunConfig(scen(n=2, gamma=math.inf, affected=(), h=0.0),
                        FusionPolicy("fractional_sum", math.inf, 0.3), cap=2000, seed=61)
        t = run_once(cfg)
        assert (t.trans_pre == t.samples_pre).all()


class TestSinglesensorDelayExample:
    def test_cusum_mean_delay_near_first_order_value(self):
        # N(0,1)->N(0.5,1), h=0, A=|log 1e-3|: mean delay within 15% of
        # |log alpha| / KL = 55.26 (first-order asymptotics, loose band)
        s = scen(n=1, gamma=1, h=0.0)
        cfg = RunConfig(s, FusionPolicy("max", abs(math.log(1e-3))), cap=10**6, seed=67)
        traces = run_batch(cfg, 10_000, workers=2)
        mean_delay = np.mean([t.stop_slot - 1 for t in traces])
        assert 0.85 * 55.262 < mean_delay < 1.15 * 55.262


class TestSamplePathTrace:
    def test_columns_and_dominance(self):
        s = scen(n=1, gamma=120, mu=0.05, h=4.0)
        trace = sample_path_trace(s, sensor=1, length=300, seed=71)
        assert set(trace) == {"slot", "sampled", "observation", "decusum", "cusum"}
        assert len(trace["slot"]) == 300
        assert (trace["cusum"] >= trace["decusum"]).all()

    def test_deterministic(self):
        s = scen(n=1, gamma=50)
        a = sample_path_trace(s, 1, 100, seed=73)
        b = sample_path_trace(s, 1, 100, seed=73)
        assert np.array_equal(a["observation"], b["observation"])


class TestReductionBitwise:
    def test_h0_d0_policy_matches_cusum_fusion(self):
        # h=0, D=0: per-sensor paths equal CuSum replays, fusion stats equal
        # the max/sum of the positive parts, bit for bit
        for rule, a in (("max", 6.0), ("sum", 14.0)):
            s = scen(n=4, gamma=50, h=0.0)
            cfg = RunConfig(s, FusionPolicy(rule, a), cap=30_000, seed=79)
            t = run_once(cfg, debug=True)
            model = s.sensors[0]
            n = t.stop_slot
            for l in range(4):
                c = 0.0
                for i in range(n):
                    c = cusum_step(c, model, float(t.debug.obs[i, l]))
                    assert c == t.debug.w[i, l]
            # replay the fusion statistic in kernel order (left to right)
            for i in range(n):
                if rule == "max":
                    f = 0.0
                    for l in range(4):
                        v = t.debug.w[i, l]
                        if v > 0.0 and v > f:
                            f = v
                else:
                    f = 0.0
                    for l in range(4):
                        v = t.debug.w[i, l]
                        if v > 0.0:
                            f += v
                assert f == t.debug.fusion_stat[i]
