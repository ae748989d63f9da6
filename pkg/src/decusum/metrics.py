"""Estimators and closed-form calculators for detection performance.

FAR is the reciprocal pre-change mean stop time; CADD the conditional
mean delay maximized over a change-point grid; the WADD surrogate starts
every sensor at its clamp floor (the adversarial pre-change history) and
upper-bounds the worst-case delay. PDC and PTC, the pre-change duty
cycle and transmission cost, have renewal-theoretic closed forms

    PDC = E[tau-] / (E[tau-] + E[sleep]),
    PTC = E[U_D] / (E[tau-] + E[sleep]),

where tau- is the ladder epoch of the pre-change LLR walk, sleep the
clamped-overshoot recovery time ceil(|max(W_tau-, -h)| / mu), and U_D
the count of slots the walk spends above the censoring level per cycle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._backend import kernel
from .errors import ConfigurationError, DomainError
from .fusion import FusionPolicy
from .gridding import try_integer_steps
from .models import Gaussian, Scenario, SensorModel
from .simulator import RunConfig, mix_seed, run_batch, substream, STREAM_AUX

Z95 = 1.959963984540054  # normal 97.5% quantile: 95% half-widths throughout


@dataclass(frozen=True)
class Estimate:
    """Point estimate with a 95% normal-approximation half-width."""

    value: float
    half_width: float


def _mean_estimate(x: np.ndarray) -> Estimate:
    n = x.shape[0]
    se = x.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
    return Estimate(float(x.mean()), Z95 * se)


@dataclass(frozen=True)
class RenewalQuantities:
    """Means of the per-cycle ladder epoch, sleep slots, and exceed count."""

    mean_ladder_epoch: float
    mean_sleep_slots: float
    mean_exceed_count: float
    se_ladder_epoch: float = 0.0
    se_sleep_slots: float = 0.0
    se_exceed_count: float = 0.0
    n_cycles: int = 0
    cov_means: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mean_ladder_epoch < 1.0:
            raise DomainError("mean ladder epoch cannot be below 1")
        if self.mean_sleep_slots < 0 or self.mean_exceed_count < 0:
            raise DomainError("renewal means cannot be negative")


@dataclass(frozen=True)
class MetricsReport:
    """Bundle of estimated metrics for one experiment."""

    far: Optional[Estimate] = None
    cadd: Optional[Estimate] = None
    cadd_gamma: Optional[int] = None
    wadd_surrogate: Optional[Estimate] = None
    pdc: tuple = field(default_factory=tuple)
    ptc: tuple = field(default_factory=tuple)
    censored_fraction: float = 0.0

    def __post_init__(self):
        for e in self.pdc + self.ptc:
            if not -1e-9 <= e.value <= 1.0 + 1e-9:
                raise DomainError(f"rate {e.value} outside [0, 1]")
        for e in (self.far, self.cadd, self.wadd_surrogate):
            if e is not None and e.value < 0:
                raise DomainError("rates and delays cannot be negative")


def estimate_far(traces) -> Estimate:
    """FAR = 1 / mean stop time, delta-method half-width.

    Censored runs count at the cap, which understates the mean and hence
    overstates the FAR (conservative).
    """
    if not traces:
        raise DomainError("estimate_far needs at least one trace")
    if any(t.change_point != math.inf for t in traces):
        raise DomainError("FAR is a pre-change quantity; use change_point=inf runs")
    stops = np.array([t.stop_slot for t in traces], dtype=np.float64)
    mean = stops.mean()
    se_mean = stops.std(ddof=1) / math.sqrt(len(traces)) if len(traces) > 1 else 0.0
    return Estimate(1.0 / mean, Z95 * se_mean / mean**2)


def censored_fraction(traces) -> float:
    return sum(t.censored for t in traces) / len(traces)


@dataclass(frozen=True)
class CaddResult:
    estimate: Estimate
    gamma: int
    per_gamma: dict
    discard_fraction: dict
    censored_fraction: float


def default_gamma_grid(scenario: Scenario, seed: int = 0) -> list:
    """Change points probed by estimate_cadd: slot 1 plus a stationary
    start, ten renewal cycles past the longest sensor's cycle length."""
    cycle = 0.0
    for i, s in enumerate(scenario.sensors):
        rq = renewal_quantities_mc(s, runs=2000, seed=mix_seed(seed, 1000 + i))
        cycle = max(cycle, rq.mean_ladder_epoch + rq.mean_sleep_slots)
    gamma_stat = int(math.ceil(10.0 * cycle)) + 1
    return [1, gamma_stat] if gamma_stat > 1 else [1]


def estimate_cadd(scenario: Scenario, policy: FusionPolicy, gamma_grid=None,
                  runs: int = 2000, cap: int = 1_000_000, seed: int = 0,
                  workers: int = 1) -> CaddResult:
    """Conditional average detection delay, maximized over gamma_grid.

    For each gamma, estimates E[tau - gamma | tau >= gamma]; runs that
    stop before gamma are discarded (their fraction reported). Censored
    runs contribute cap - gamma, a lower bound on their delay.
    """
    if not scenario.affected:
        raise DomainError("CADD needs a nonempty affected set")
    if gamma_grid is None:
        gamma_grid = default_gamma_grid(scenario, seed=seed)
    if not gamma_grid:
        raise DomainError("gamma_grid must be nonempty")
    per_gamma = {}
    discards = {}
    censored = 0
    total = 0
    for gamma in sorted(set(int(g) for g in gamma_grid)):
        cfg = RunConfig(scenario=scenario.with_change_point(gamma), policy=policy,
                        cap=cap, seed=seed)
        traces = run_batch(cfg, runs, workers=workers)
        stops = np.array([t.stop_slot for t in traces], dtype=np.float64)
        keep = stops >= gamma
        discards[gamma] = float(1.0 - keep.mean())
        censored += sum(t.censored for t in traces)
        total += len(traces)
        if not keep.any():
            warnings.warn(f"all runs stopped before gamma={gamma}; grid point excluded")
            continue
        per_gamma[gamma] = _mean_estimate(stops[keep] - gamma)
    if not per_gamma:
        raise DomainError("no gamma grid point had surviving runs")
    gamma_max = max(per_gamma, key=lambda g: per_gamma[g].value)
    return CaddResult(estimate=per_gamma[gamma_max], gamma=gamma_max,
                      per_gamma=per_gamma, discard_fraction=discards,
                      censored_fraction=censored / total)


@dataclass(frozen=True)
class WaddResult:
    estimate: Estimate
    censored_fraction: float


def estimate_wadd_surrogate(scenario: Scenario, policy: FusionPolicy,
                            runs: int = 2000, cap: int = 1_000_000,
                            seed: int = 0, workers: int = 1) -> WaddResult:
    """Upper-bounding surrogate for the worst-case delay.

    Starts every sensor at w = -h (deepest sleep) with the change at slot
    1; by the resetting property this start dominates any pre-change
    history up to ceil(h/mu) slots. Not the essential supremum itself.
    """
    if not scenario.affected:
        raise DomainError("WADD needs a nonempty affected set")
    for k in sorted(scenario.affected):
        if scenario.sensors[k - 1].h == math.inf:
            raise DomainError(
                "WADD surrogate refused: affected sensor has h=inf (no worst-case guarantee)")
    w0 = tuple(-s.h for s in scenario.sensors)
    cfg = RunConfig(scenario=scenario.with_change_point(1), policy=policy,
                    cap=cap, seed=seed, initial_states=w0)
    traces = run_batch(cfg, runs, workers=workers)
    delays = np.array([t.stop_slot - 1 for t in traces], dtype=np.float64)
    return WaddResult(_mean_estimate(delays), censored_fraction(traces))


def renewal_quantities_mc(model: SensorModel, runs: int = 10_000, seed: int = 0,
                          cycle_cap: int = 1_000_000) -> RenewalQuantities:
    """Monte Carlo means of the ladder-cycle quantities under pre-change.

    Simulates i.i.d. cycles of the LLR random walk to its first negative
    excursion. Cycles exceeding cycle_cap are discarded with a warning
    (negative drift makes this a misconfiguration signal, not a normal
    outcome).
    """
    if runs < 100:
        raise ConfigurationError(f"renewal estimation needs runs >= 100, got {runs}")
    gen = substream(seed, 0, STREAM_AUX)
    llr_int = np.empty(0, dtype=np.int64)
    step = 0.0
    if isinstance(model.pre, Gaussian):
        kind = 0
        mean_pre, sd = model.pre.mean, math.sqrt(model.pre.variance)
        llr_a = (model.post.mean - model.pre.mean) / model.pre.variance
        llr_b = (model.pre.mean**2 - model.post.mean**2) / (2.0 * model.pre.variance)
        natoms, support, cdf, tab = 1, np.zeros(1), np.ones(1), np.zeros(1)
    else:
        kind = 1
        mean_pre = sd = llr_a = llr_b = 0.0
        natoms = len(model.pre.support)
        support = np.array(model.pre.support)
        cdf = np.empty(natoms)
        acc = 0.0
        for j, p in enumerate(model.pre.probs):  # same accumulation as the run packer
            acc += p
            cdf[j] = acc
        tab = np.array([math.log(pp / qq) for pp, qq in zip(model.post.probs, model.pre.probs)])
        grid = try_integer_steps(list(tab))
        if grid is not None:  # exact lattice walk: no float drift at zero states
            step = grid[0]
            llr_int = np.array(grid[1], dtype=np.int64)
    tau, sleep, exceed, discarded = kernel().ladder_cycles(
        gen, kind, mean_pre, sd, llr_a, llr_b, natoms, support, cdf, tab,
        llr_int, step, model.mu, model.h, model.d_local, runs, cycle_cap)
    if discarded:
        warnings.warn(f"{discarded} ladder cycles discarded at cycle_cap={cycle_cap}; "
                      "check that KL(pre||post) is well above zero")
    stack = np.vstack([tau, sleep, exceed]).astype(np.float64)
    cov = np.cov(stack, ddof=1) / runs
    ses = np.sqrt(np.diag(cov))
    return RenewalQuantities(
        mean_ladder_epoch=float(tau.mean()), mean_sleep_slots=float(sleep.mean()),
        mean_exceed_count=float(exceed.mean()),
        se_ladder_epoch=float(ses[0]), se_sleep_slots=float(ses[1]),
        se_exceed_count=float(ses[2]), n_cycles=runs, cov_means=cov)


def pdc_ptc_closed_form(model: SensorModel, rq: RenewalQuantities) -> tuple:
    """Renewal-reward duty cycle and transmission cost from cycle means."""
    cycle = rq.mean_ladder_epoch + rq.mean_sleep_slots
    pdc = rq.mean_ladder_epoch / cycle
    ptc = rq.mean_exceed_count / cycle
    if model.h == 0.0:
        assert rq.mean_sleep_slots == 0.0  # h=0 never sleeps
    return pdc, ptc


def pdc_ptc_closed_form_hw(rq: RenewalQuantities) -> tuple:
    """(pdc, ptc) as Estimates, delta-method half-widths from cycle covariance."""
    a, s, u = rq.mean_ladder_epoch, rq.mean_sleep_slots, rq.mean_exceed_count
    cycle = a + s
    pdc = a / cycle
    ptc = u / cycle
    if rq.cov_means is None:
        return Estimate(pdc, 0.0), Estimate(ptc, 0.0)
    g_pdc = np.array([s / cycle**2, -a / cycle**2, 0.0])
    g_ptc = np.array([-u / cycle**2, -u / cycle**2, 1.0 / cycle])
    var_pdc = float(g_pdc @ rq.cov_means @ g_pdc)
    var_ptc = float(g_ptc @ rq.cov_means @ g_ptc)
    return (Estimate(pdc, Z95 * math.sqrt(max(var_pdc, 0.0))),
            Estimate(ptc, Z95 * math.sqrt(max(var_ptc, 0.0))))


def pdc_bound_hinf(model: SensorModel) -> float:
    """Duty-cycle value mu / (mu + D(pre||post)) of the unclamped detector.

    Exact for h=inf (up to the ceiling in the sleep count, which only
    lowers the true duty cycle); used inversely to pick mu for a duty
    target beta: mu = beta * D / (1 - beta).
    """
    return model.mu / (model.mu + model.kl_pre_post)


def mu_for_pdc_target(model_or_kl, beta: float) -> float:
    """Invert the h=inf duty-cycle bound: the mu meeting duty target beta."""
    if not 0 < beta < 1:
        raise ConfigurationError(f"duty-cycle target must be in (0, 1), got {beta}")
    kl = model_or_kl if isinstance(model_or_kl, float) else model_or_kl.kl_pre_post
    return beta * kl / (1.0 - beta)


def estimate_pdc_ptc_direct(traces) -> tuple:
    """Long-run per-sensor sample and transmission fractions.

    Pools pre-change slots across traces; half-widths use the linearized
    (cluster) variance of the pooled ratio. Expects change_point=inf
    traces with long horizons.
    """
    if not traces:
        raise DomainError("need at least one trace")
    n_sensors = traces[0].samples_pre.shape[0]
    slots = np.array([min(t.stop_slot, t.change_point - 1) if t.change_point != math.inf
                      else t.stop_slot for t in traces], dtype=np.float64)
    if slots.sum() <= 0:
        raise DomainError("traces contain no pre-change slots")
    pdc = []
    ptc = []
    for l in range(n_sensors):
        for counts, out in ((np.array([t.samples_pre[l] for t in traces], dtype=np.float64), pdc),
                            (np.array([t.trans_pre[l] for t in traces], dtype=np.float64), ptc)):
            p = counts.sum() / slots.sum()
            resid = counts - p * slots
            se = math.sqrt(float((resid**2).sum())) / slots.sum()
            out.append(Estimate(float(p), Z95 * se))
    return pdc, ptc
