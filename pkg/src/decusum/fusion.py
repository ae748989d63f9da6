"""Fusion-center stopping rules and threshold selection.

Rules over per-sensor uplinks: max and sum compare the largest /
summed transmitted statistic against a threshold (NULL counts as zero),
the all rule fires when every sensor transmits its one-bit flag in the
same slot. oracle_cusum and fractional_sum are simulation baselines with
fusion state of their own and are handled inside the simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import CalibrationError, ConfigurationError, DomainError
from .models import Scenario

RULES = ("max", "sum", "all", "oracle_cusum", "fractional_sum")


@dataclass(frozen=True)
class FusionPolicy:
    """Fusion rule, its threshold, and (fractional only) the coin bias."""

    rule: str
    threshold_a: float
    sampling_prob: Optional[float] = None

    def __post_init__(self):
        if self.rule not in RULES:
            raise ConfigurationError(f"unknown fusion rule {self.rule!r}; expected one of {RULES}")
        if not self.threshold_a > 0:
            raise ConfigurationError(f"threshold_a must be > 0, got {self.threshold_a}")
        if self.rule == "fractional_sum":
            p = self.sampling_prob
            if p is None or not 0 < p <= 1:
                raise ConfigurationError("fractional_sum needs sampling_prob in (0, 1]")
        elif self.sampling_prob is not None:
            raise ConfigurationError(f"sampling_prob is only valid for fractional_sum, not {self.rule}")

    def with_threshold(self, a: float) -> "FusionPolicy":
        return FusionPolicy(self.rule, a, self.sampling_prob)


def fusion_decide(policy: FusionPolicy, uplinks) -> bool:
    """Stopping decision for one slot of uplinks (None = NULL = zero)."""
    if policy.rule not in ("max", "sum", "all"):
        raise DomainError(f"{policy.rule} is not a per-slot uplink rule")
    values = [0.0 if v is None else float(v) for v in uplinks]
    if policy.rule == "max":
        return max(values) > policy.threshold_a
    if policy.rule == "sum":
        return sum(values) > policy.threshold_a
    return all(v == 1.0 for v in values)


def threshold_for_far(rule: str, alpha: float, l: int) -> float:
    """Conservative threshold guaranteeing FAR <= alpha.

    max rule: log(L/alpha); sum rule: L*log(L/alpha). At L=1 both reduce
    to the single-sensor |log alpha|.
    """
    if rule not in ("max", "sum"):
        raise DomainError(f"threshold formula defined for max/sum only, not {rule!r}")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    if l < 1:
        raise DomainError(f"l must be >= 1, got {l}")
    base = math.log(l / alpha)
    return base if rule == "max" else l * base


def de_all_weights(scenario: Scenario) -> np.ndarray:
    """Per-sensor threshold split weights, KL share of each stream."""
    kls = np.array([s.kl_post_pre for s in scenario.sensors], dtype=np.float64)
    return kls / kls.sum()


def _formula_start(rule: str, alpha: float, l: int) -> float:
    if rule == "max":
        return threshold_for_far("max", alpha, l)
    if rule == "oracle_cusum":
        return abs(math.log(alpha))
    # sum, fractional_sum, all: the sum-rule bound is feasible for each
    return threshold_for_far("sum", alpha, l)


def calibrate_threshold_mc(scenario: Scenario, rule: str, alpha: float,
                           runs: int = 2000, cap: Optional[int] = None,
                           seed: int = 0, workers: int = 1,
                           sampling_prob: Optional[float] = None) -> float:
    """Find A such that the estimated FAR = 1/mean(stop time) hits alpha.

    Pre-change Monte Carlo with shared seeds across candidate thresholds,
    so the estimated FAR is monotone in A and interval refinement is
    exact. Runs truncated at cap count as cap, which overstates the FAR
    (conservative: calibrated thresholds err high). Converges when the
    estimate is within one MC standard error of alpha or the bracket has
    collapsed; the bracket start is the conservative formula threshold,
    so the result does not exceed it (up to MC noise).
    """
    from . import simulator  # deferred: simulator imports this module

    if scenario.change_point != math.inf:
        raise ConfigurationError("calibration requires a pre-change scenario (change_point=inf)")
    if runs < 100:
        raise ConfigurationError(f"calibration needs runs >= 100, got {runs}")
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")

    l = scenario.n_sensors
    hi0 = _formula_start(rule, alpha, l)
    if cap is None:
        cap = int(math.ceil(100.0 / alpha))
    target_mean = 1.0 / alpha

    def far_at(thresholds: np.ndarray) -> tuple:
        thr = np.asarray(sorted(thresholds), dtype=np.float64)
        pol = FusionPolicy(rule, float(thr[-1]), sampling_prob)
        cfg = simulator.RunConfig(scenario=scenario, policy=pol, cap=cap, seed=seed)
        stops = simulator.stop_times_for_thresholds(cfg, runs, thr, workers=workers)
        means = stops.mean(axis=0)
        ses = stops.std(axis=0, ddof=1) / math.sqrt(runs)
        return thr, 1.0 / means, ses / means**2

    # establish a feasible upper end
    hi = hi0
    for _ in range(5):
        _, fars, ses = far_at(np.array([hi]))
        if fars[0] <= alpha + ses[0]:
            break
        hi *= 2.0
        if hi > 10.0 * hi0:
            raise CalibrationError(
                f"could not bracket FAR target {alpha} within [0, 10x formula threshold]")
    if fars[0] >= alpha - ses[0]:
        return float(hi)  # formula threshold already on target

    lo = min(1e-6 * hi, 1e-9) if rule != "max" else _max_rule_floor(scenario, hi)
    for _ in range(40):
        if rule == "all":
            grid = np.array([0.5 * (lo + hi)])
        else:
            grid = np.linspace(lo, hi, 9)[1:-1]
        thr, fars, ses = far_at(grid)
        # fars is nonincreasing along thr; locate the crossing of alpha
        done = np.abs(fars - alpha) <= ses
        if done.any():
            return float(thr[int(np.argmax(done))])
        below = fars <= alpha
        if below.all():
            hi = thr[0]
        elif not below.any():
            lo = thr[-1]
        else:
            k = int(np.argmax(below))
            lo, hi = thr[k - 1], thr[k]
        if hi - lo <= 1e-4 * max(1.0, hi0):
            return float(hi)  # conservative side of the collapsed bracket
    return float(hi)


def _max_rule_floor(scenario: Scenario, hi: float) -> float:
    # the max-rule delay analysis assumes A above every censoring level
    dmax = max(s.d_local for s in scenario.sensors)
    return min(hi, math.nextafter(dmax, math.inf)) if dmax > 0 else min(1e-9, hi)
