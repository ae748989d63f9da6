"""Invariant and oracle cross-checks behind the `verify` subcommand.

Each check returns (ok, detail); ok may be None for a skipped check
(e.g. oracle comparisons when the supplied model is not lattice-
commensurable, in which case the Monte Carlo checks still run).
"""

from __future__ import annotations

import math

import numpy as np

from . import lattice
from .errors import IncommensurableModelError
from .fusion import FusionPolicy
from .metrics import (estimate_far, estimate_pdc_ptc_direct, pdc_ptc_closed_form,
                      pdc_ptc_closed_form_hw, renewal_quantities_mc)
from .models import Discrete, Gaussian, SensorModel, Scenario
from .simulator import (RunConfig, cusum_trajectory, decusum_trajectory, mix_seed,
                        run_batch, run_once, substream, STREAM_AUX)

LOG4 = math.log(4.0)


def bernoulli_model(mu=LOG4 / 2, h=2 * LOG4, d=0.0) -> SensorModel:
    """Built-in lattice-commensurable discrete model."""
    return SensorModel(pre=Discrete((0.0, 1.0), (0.8, 0.2)),
                       post=Discrete((0.0, 1.0), (0.2, 0.8)),
                       mu=mu, h=h, d_local=d)


def gaussian_model(theta=0.5, mu=0.125, h=2.0, d=0.2) -> SensorModel:
    return SensorModel(pre=Gaussian(0.0, 1.0), post=Gaussian(theta, 1.0),
                       mu=mu, h=h, d_local=d)


def _llr_sequences(seed: int, n_seq: int, length: int):
    """Mixed Gaussian and Bernoulli LLR sequences, pre- and post-change laws."""
    out = []
    for i in range(n_seq):
        gen = substream(mix_seed(seed, i), 0, STREAM_AUX)
        if i % 2 == 0:
            x = gen.standard_normal(length) + (0.5 if i % 4 == 0 else 0.0)
            out.append(0.5 * x - 0.125)
        else:
            p = 0.2 if i % 4 == 1 else 0.8
            bits = gen.random(length) < p
            out.append(np.where(bits, LOG4, -LOG4))
    return out


def check_dominance(runs: int, seed: int, n_seq: int = 60, length: int = 4000,
                    mus=(0.05, 0.125, 0.5), hs=(0.0, 2.0, math.inf)):
    """CuSum path dominates the data-efficient path on shared observations."""
    worst = math.inf
    for llr in _llr_sequences(seed, n_seq, length):
        c = cusum_trajectory(llr)
        for mu in mus:
            for h in hs:
                w, _ = decusum_trajectory(llr, mu, h)
                gap = float((c - w).min())
                worst = min(worst, gap)
                if gap < 0.0:
                    return False, f"violated: min(C-W) = {gap}"
    return True, f"min(C-W) = {worst:.6g} >= 0 over {n_seq} sequences"


def check_clamp_floor(runs: int, seed: int):
    """Statistic never goes below -h."""
    worst = math.inf
    for llr in _llr_sequences(mix_seed(seed, 5), 40, 4000):
        for mu in (0.05, 0.5):
            for h in (0.0, 1.0, 3.0):
                w, _ = decusum_trajectory(llr, mu, h)
                worst = min(worst, float((w + h).min()))
    ok = worst >= 0.0
    return ok, f"min(w + h) = {worst:.6g}"


def check_reduction(runs: int, seed: int):
    """With h=0 the data-efficient path equals the CuSum path exactly."""
    for llr in _llr_sequences(mix_seed(seed, 9), 40, 4000):
        w, sampled = decusum_trajectory(llr, mu=0.3, h=0.0)
        c = cusum_trajectory(llr)
        if not (w == c).all():
            return False, "h=0 trajectory differs from CuSum"
        if not sampled.all():
            return False, "h=0 skipped a slot"
    return True, "h=0 paths equal CuSum paths exactly"


def check_skip_bound(runs: int, seed: int):
    """Longest skip run never exceeds ceil(h/mu) + 1."""
    worst = -1
    bound = None
    for mu, h in ((0.125, 2.0), (0.5, 2.0), (0.05, 1.0)):
        model = gaussian_model(mu=mu, h=h)
        scenario = Scenario((model,) * 3, frozenset(), math.inf)
        cfg = RunConfig(scenario=scenario, policy=FusionPolicy("sum", 40.0),
                        cap=20_000, seed=mix_seed(seed, 13))
        traces = run_batch(cfg, max(50, runs // 40))
        bound = math.ceil(h / mu) + 1
        observed = max(int(t.max_skip_run.max()) for t in traces)
        worst = max(worst, observed - bound)
        if observed > bound:
            return False, f"skip run {observed} exceeds bound {bound} (mu={mu}, h={h})"
    return True, f"max skip run within bound (last bound {bound})"


def check_renewal_consistency(runs: int, seed: int, model: SensorModel = None):
    """Closed-form PDC/PTC agree with long-run direct estimates (3 s.e.)."""
    models = [gaussian_model(), bernoulli_model()]
    if model is not None:
        models.append(model)
    worst = 0.0
    for i, m in enumerate(models):
        rq = renewal_quantities_mc(m, runs=max(2000, runs), seed=mix_seed(seed, 31 + i))
        pdc_cf, ptc_cf = pdc_ptc_closed_form(m, rq)
        pdc_cf_e, ptc_cf_e = pdc_ptc_closed_form_hw(rq)
        scenario = Scenario((m,), frozenset(), math.inf)
        cfg = RunConfig(scenario=scenario, policy=FusionPolicy("max", 1e9),
                        cap=3000, seed=mix_seed(seed, 37 + i))
        traces = run_batch(cfg, max(100, runs // 20))
        pdc_d, ptc_d = estimate_pdc_ptc_direct(traces)
        for cf, cf_e, direct in ((pdc_cf, pdc_cf_e, pdc_d[0]), (ptc_cf, ptc_cf_e, ptc_d[0])):
            se = math.hypot(cf_e.half_width / 1.96, direct.half_width / 1.96)
            dev = abs(cf - direct.value) / se if se > 0 else 0.0
            worst = max(worst, dev)
            if dev > 3.0:
                return False, f"model {i}: closed form {cf:.5f} vs direct {direct.value:.5f} ({dev:.2f} s.e.)"
    return True, f"worst deviation {worst:.2f} s.e. over {len(models)} models"


def check_lattice_oracle(runs: int, seed: int, model: SensorModel = None):
    """Exact lattice values match Monte Carlo within 3 s.e."""
    m = model if model is not None else bernoulli_model()
    a = 5 * LOG4
    try:
        lm = lattice.lattice_build(m, a)
    except IncommensurableModelError as exc:
        return None, f"oracle skipped (incommensurable model: {exc}); MC checks unaffected"
    mean_exact = lattice.exact_mean_stop(lm)
    scenario = Scenario((m,), frozenset(), math.inf)
    cfg = RunConfig(scenario=scenario,
                    policy=FusionPolicy("max", a if a > m.d_local else 2 * m.d_local),
                    cap=10 ** 6, seed=mix_seed(seed, 41))
    traces = run_batch(cfg, max(1000, runs))
    stops = np.array([t.stop_slot for t in traces], dtype=np.float64)
    se = stops.std(ddof=1) / math.sqrt(len(stops))
    dev_stop = abs(stops.mean() - mean_exact) / se
    rq = renewal_quantities_mc(m, runs=max(2000, runs), seed=mix_seed(seed, 43))
    pdc_mc, ptc_mc = pdc_ptc_closed_form_hw(rq)
    pdc_ex, ptc_ex = lattice.exact_pdc_ptc(lm)
    dev_pdc = abs(pdc_mc.value - pdc_ex) / (pdc_mc.half_width / 1.96)
    dev_ptc = abs(ptc_mc.value - ptc_ex) / (ptc_mc.half_width / 1.96)
    worst = max(dev_stop, dev_pdc, dev_ptc)
    if worst > 3.0:
        return False, (f"oracle vs MC deviation {worst:.2f} s.e. "
                       f"(stop {dev_stop:.2f}, pdc {dev_pdc:.2f}, ptc {dev_ptc:.2f})")
    return True, f"oracle vs MC within {worst:.2f} s.e."


def check_lattice_numerics(runs: int, seed: int, model: SensorModel = None):
    """Linear-solve oracle agrees with forward distribution evolution to 1e-9."""
    m = model if model is not None else bernoulli_model()
    try:
        lm = lattice.lattice_build(m, 3 * LOG4)
    except IncommensurableModelError as exc:
        return None, f"skipped (incommensurable model: {exc})"
    solve = lattice.exact_mean_stop(lm)
    forward = lattice.forward_mean_stop(lm)
    rel = abs(solve - forward) / solve
    rq_s = lattice.exact_renewal_quantities(lm)
    rq_f = lattice.forward_renewal_quantities(lm)
    rel = max(rel,
              abs(rq_s.mean_ladder_epoch - rq_f.mean_ladder_epoch) / rq_s.mean_ladder_epoch,
              abs(rq_s.mean_sleep_slots - rq_f.mean_sleep_slots) / max(rq_s.mean_sleep_slots, 1.0),
              abs(rq_s.mean_exceed_count - rq_f.mean_exceed_count) / max(rq_s.mean_exceed_count, 1.0))
    ok = rel <= 1e-9
    return ok, f"solve vs forward evolution relative gap {rel:.3e}"


def check_containment(runs: int, seed: int):
    """Sum rule at A never stops before max rule at A/L, path by path."""
    model = gaussian_model(d=0.0)
    n_sensors = 4
    scenario = Scenario((model,) * n_sensors, frozenset(), math.inf)
    a = 4 * math.log(4 / 0.05)
    n_runs = max(200, runs // 10)
    cfg_sum = RunConfig(scenario=scenario, policy=FusionPolicy("sum", a),
                        cap=200_000, seed=mix_seed(seed, 47))
    cfg_max = RunConfig(scenario=scenario, policy=FusionPolicy("max", a / n_sensors),
                        cap=200_000, seed=mix_seed(seed, 47))
    stops_sum = np.array([t.stop_slot for t in run_batch(cfg_sum, n_runs)])
    stops_max = np.array([t.stop_slot for t in run_batch(cfg_max, n_runs)])
    bad = int((stops_sum < stops_max).sum())
    if bad:
        return False, f"{bad}/{n_runs} paths had sum@A stop before max@A/L"
    return True, f"containment held on all {n_runs} paired paths"


def check_threshold_independence(runs: int, seed: int):
    """Pre-change sampling/transmission counters do not depend on A."""
    model = gaussian_model(theta=0.2, mu=0.02, h=10.0, d=0.0)
    scenario = Scenario((model,) * 3, frozenset(), math.inf)
    horizon = 2000
    n_runs = 40
    counters = []
    for a in (30.0, 60.0):
        cfg = RunConfig(scenario=scenario, policy=FusionPolicy("sum", a),
                        cap=horizon, seed=mix_seed(seed, 53))
        traces = run_batch(cfg, n_runs)
        counters.append([(t.censored, tuple(t.samples_pre), tuple(t.trans_pre))
                         for t in traces])
    pairs = [(x, y) for x, y in zip(*counters) if x[0] and y[0]]  # both ran to the horizon
    if len(pairs) < n_runs // 2:
        return False, f"only {len(pairs)}/{n_runs} paired runs reached the horizon"
    mismatched = sum(1 for x, y in pairs if x[1:] != y[1:])
    if mismatched:
        return False, f"{mismatched} paired runs changed counters with the threshold"
    return True, f"counters identical across thresholds on {len(pairs)} paired runs"


def check_far_estimator(runs: int, seed: int):
    """Single-sensor estimated FAR matches the exact lattice FAR (3 s.e.)."""
    m = bernoulli_model()
    a = 4 * LOG4
    lm = lattice.lattice_build(m, a)
    far_exact = lattice.exact_far(lm)
    scenario = Scenario((m,), frozenset(), math.inf)
    cfg = RunConfig(scenario=scenario, policy=FusionPolicy("max", a), cap=10 ** 6,
                    seed=mix_seed(seed, 59))
    far = estimate_far(run_batch(cfg, max(1000, runs)))
    dev = abs(far.value - far_exact) / (far.half_width / 1.96)
    ok = dev <= 3.0
    return ok, f"estimated {far.value:.3e} vs exact {far_exact:.3e} ({dev:.2f} s.e.)"


def check_run_determinism(runs: int, seed: int):
    """Same configuration, same seed: identical traces."""
    model = gaussian_model()
    scenario = Scenario((model,) * 2, frozenset({1}), 50)
    cfg = RunConfig(scenario=scenario, policy=FusionPolicy("sum", 8.0), cap=50_000,
                    seed=mix_seed(seed, 61))
    t1 = run_once(cfg)
    t2 = run_once(cfg)
    same = (t1.stop_slot == t2.stop_slot and (t1.final_w == t2.final_w).all()
            and (t1.samples_pre == t2.samples_pre).all())
    return same, "repeated run identical" if same else "repeated run differed"


def build_checks(model: SensorModel = None, runs: int = 4000, seed: int = 7):
    """(name, callable) list for the verify subcommand."""
    return [
        ("dominance", lambda: check_dominance(runs, seed)),
        ("clamp_floor", lambda: check_clamp_floor(runs, seed)),
        ("h0_reduction", lambda: check_reduction(runs, seed)),
        ("skip_run_bound", lambda: check_skip_bound(runs, seed)),
        ("renewal_consistency", lambda: check_renewal_consistency(runs, seed, model)),
        ("lattice_oracle_vs_mc", lambda: check_lattice_oracle(runs, seed, model)),
        ("lattice_numerics", lambda: check_lattice_numerics(runs, seed, model)),
        ("pathwise_containment", lambda: check_containment(runs, seed)),
        ("threshold_independence", lambda: check_threshold_independence(runs, seed)),
        ("far_vs_exact", lambda: check_far_estimator(runs, seed)),
        ("determinism", lambda: check_run_determinism(runs, seed)),
    ]
