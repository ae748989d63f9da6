import math

import numpy as np
import pytest

from decusum import (ConfigurationError, Discrete, DomainError, FusionPolicy,
                     Gaussian, Scenario, SensorModel, calibrate_threshold_mc,
                     de_all_weights, fusion_decide, threshold_for_far)
from decusum import lattice
from decusum.simulator import RunConfig, run_batch, stop_times_for_thresholds

G0, G1 = Gaussian(0.0, 1.0), Gaussian(0.5, 1.0)
LOG4 = math.log(4.0)


def gmodel(mu=0.125, h=2.0, d=0.0, theta=0.5):
    return SensorModel(pre=G0, post=Gaussian(theta, 1.0), mu=mu, h=h, d_local=d)


class TestFusionPolicy:
    def test_unknown_rule(self):
        with pytest.raises(ConfigurationError):
            FusionPolicy("median", 1.0)

    def test_threshold_positive(self):
        with pytest.raises(ConfigurationError):
            FusionPolicy("max", 0.0)

    def test_fractional_needs_prob(self):
        with pytest.raises(ConfigurationError):
            FusionPolicy("fractional_sum", 1.0)
        FusionPolicy("fractional_sum", 1.0, 0.5)

    def test_prob_only_for_fractional(self):
        with pytest.raises(ConfigurationError):
            FusionPolicy("sum", 1.0, 0.5)


class TestFusionDecide:
    def test_max_rule(self):
        assert fusion_decide(FusionPolicy("max", 5.0), [None, 5.1, None]) is True
        assert fusion_decide(FusionPolicy("max", 5.0), [None, 5.0, None]) is False

    def test_sum_rule(self):
        assert fusion_decide(FusionPolicy("sum", 5.0), [2.0, 2.0, None]) is False
        assert fusion_decide(FusionPolicy("sum", 5.0), [2.0, 2.0, 1.5]) is True

    def test_all_rule(self):
        assert fusion_decide(FusionPolicy("all", 1.0), [1.0, 1.0, None]) is False
        assert fusion_decide(FusionPolicy("all", 1.0), [1.0, 1.0, 1.0]) is True

    def test_null_counts_as_zero(self):
        assert fusion_decide(FusionPolicy("max", 0.5), [None, None]) is False

    def test_non_uplink_rules_rejected(self):
        with pytest.raises(DomainError):
            fusion_decide(FusionPolicy("oracle_cusum", 1.0), [1.0])

    def test_monotone_in_uplinks(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            ups = [None if rng.random() < 0.3 else float(rng.random() * 4) for _ in range(5)]
            for rule, a in (("max", 2.0), ("sum", 6.0)):
                pol = FusionPolicy(rule, a)
                before = fusion_decide(pol, ups)
                k = int(rng.integers(5))
                raised = list(ups)
                raised[k] = (0.0 if raised[k] is None else raised[k]) + rng.random()
                if before:
                    assert fusion_decide(pol, raised) is True


class TestThresholdForFar:
    def test_max_formula(self):
        assert threshold_for_far("max", 1e-3, 100) == pytest.approx(math.log(1e5), rel=1e-12)
        assert threshold_for_far("max", 1e-3, 100) == pytest.approx(11.512925465, rel=1e-9)

    def test_sum_formula_collapses_at_l1(self):
        assert threshold_for_far("sum", 1e-3, 1) == pytest.approx(math.log(1000), rel=1e-12)

    def test_consistent_with_single_sensor(self):
        assert threshold_for_far("max", 1e-3, 1) == pytest.approx(abs(math.log(1e-3)), rel=1e-12)

    def test_rejects_other_rules(self):
        with pytest.raises(DomainError):
            threshold_for_far("all", 0.1, 2)


class TestDeAllWeights:
    def test_identical_sensors(self):
        s = Scenario((gmodel(),) * 4, frozenset(), math.inf)
        assert de_all_weights(s) == pytest.approx([0.25] * 4, rel=1e-12)

    def test_kl_ratio(self):
        a = gmodel(theta=0.5)  # KL 0.125
        b = SensorModel(pre=G0, post=Gaussian(math.sqrt(2 * 0.375), 1.0), mu=0.1)  # KL 0.375
        s = Scenario((a, b), frozenset(), math.inf)
        assert de_all_weights(s) == pytest.approx([0.25, 0.75], rel=1e-12)

    def test_single_sensor(self):
        s = Scenario((gmodel(),), frozenset(), math.inf)
        assert de_all_weights(s) == pytest.approx([1.0], rel=1e-12)

    def test_sums_to_one(self):
        rng = np.random.default_rng(6)
        sensors = tuple(gmodel(theta=0.1 + 0.6 * rng.random()) for _ in range(6))
        s = Scenario(sensors, frozenset(), math.inf)
        w = de_all_weights(s)
        assert abs(w.sum() - 1.0) < 1e-12
        assert (w > 0).all()


class TestPathwiseContainment:
    def test_sum_at_a_never_faster_than_max_at_a_over_l(self):
        n_sensors = 4
        scen = Scenario((gmodel(d=0.0),) * n_sensors, frozenset(), math.inf)
        a = 4 * math.log(4 / 0.05)
        cfg_sum = RunConfig(scen, FusionPolicy("sum", a), cap=100_000, seed=99)
        cfg_max = RunConfig(scen, FusionPolicy("max", a / n_sensors), cap=100_000, seed=99)
        stops_sum = np.array([t.stop_slot for t in run_batch(cfg_sum, 200)])
        stops_max = np.array([t.stop_slot for t in run_batch(cfg_max, 200)])
        assert (stops_sum >= stops_max).all()


class TestCalibration:
    def test_result_below_formula_threshold(self):
        scen = Scenario((gmodel(),) * 2, frozenset(), math.inf)
        a = calibrate_threshold_mc(scen, "max", 0.02, runs=400, cap=20_000, seed=5)
        assert 0 < a <= threshold_for_far("max", 0.02, 2)

    def test_requires_prechange_scenario(self):
        scen = Scenario((gmodel(),), frozenset({1}), 10)
        with pytest.raises(ConfigurationError):
            calibrate_threshold_mc(scen, "max", 0.05, runs=200)

    def test_requires_enough_runs(self):
        scen = Scenario((gmodel(),), frozenset(), math.inf)
        with pytest.raises(ConfigurationError):
            calibrate_threshold_mc(scen, "max", 0.05, runs=50)

    def test_single_sensor_sum_matches_lattice_far(self):
        # calibrate a discrete single-sensor policy; the exact lattice FAR
        # is a step function of A, so the returned threshold's level must
        # satisfy the target while the next level down must violate it
        m = SensorModel(pre=Discrete((0.0, 1.0), (0.8, 0.2)),
                        post=Discrete((0.0, 1.0), (0.2, 0.8)),
                        mu=LOG4 / 2, h=2 * LOG4, d_local=0.0)
        scen = Scenario((m,), frozenset(), math.inf)
        alpha = 0.02
        runs = 2000
        a = calibrate_threshold_mc(scen, "sum", alpha, runs=runs, cap=50_000, seed=17)
        step = LOG4 / 2

        def far_at_level(k):
            lm = lattice.LatticeModel(step=step, llr_steps=(-2, 2), probs_pre=(0.8, 0.2),
                                      mu_steps=1, h_steps=4, a_steps=k, d_steps=0)
            return lattice.exact_far(lm)

        level = int(a / step)
        tol = 4 * alpha / math.sqrt(runs)  # stop times are near-exponential: cv ~ 1
        assert far_at_level(level) <= alpha + tol
        assert far_at_level(level - 1) >= alpha - tol


class TestStopTimesForThresholds:
    def test_matches_individual_runs(self):
        scen = Scenario((gmodel(),) * 2, frozenset(), math.inf)
        thresholds = np.array([1.0, 2.5, 4.0])
        cfg = RunConfig(scen, FusionPolicy("sum", 4.0), cap=50_000, seed=31)
        stops = stop_times_for_thresholds(cfg, 50, thresholds)
        for j, a in enumerate(thresholds):
            cfg_a = RunConfig(scen, FusionPolicy("sum", float(a)), cap=50_000, seed=31)
            singles = np.array([t.stop_slot for t in run_batch(cfg_a, 50)])
            assert (stops[:, j] == singles).all()

    def test_monotone_in_threshold(self):
        scen = Scenario((gmodel(),) * 2, frozenset(), math.inf)
        cfg = RunConfig(scen, FusionPolicy("max", 5.0), cap=50_000, seed=37)
        stops = stop_times_for_thresholds(cfg, 100, np.array([1.0, 2.0, 3.0, 5.0]))
        assert (np.diff(stops, axis=1) >= 0).all()
