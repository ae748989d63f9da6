"""Policy simulation driver: one run, batches, and baselines.

A run advances all sensors slot by slot (each deciding sample/skip from
its own statistic only), forms censored uplinks, and stops at the first
fusion firing or at the cap. Runs are deterministic functions of the
configuration seed: run i derives its seed as cfg.seed XOR i, and every
(run, sensor) pair owns an independent counter-addressed Philox
substream, with a separate substream for the fractional baseline's
coins. Observations are drawn only for sampled slots.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._backend import kernel
from .errors import ConfigurationError
from .fusion import FusionPolicy, de_all_weights
from .models import Discrete, Gaussian, Scenario

_MASK64 = (1 << 64) - 1
_PHILOX_SALT = 0x9E3779B97F4A7C15
_INF_SLOT = 1 << 62

_RULE_CODES = {"max": 0, "sum": 1, "all": 2, "oracle_cusum": 3, "fractional_sum": 4}

STREAM_OBS = 0
STREAM_COIN = 1
STREAM_AUX = 2


def mix_seed(seed: int, tag: int) -> int:
    """Derive a decorrelated 64-bit sub-seed (splitmix64 of seed + tag)."""
    z = (seed + tag * 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def substream(run_seed: int, sensor: int, stream_kind: int) -> np.random.Generator:
    """Independent generator for one (run, sensor, kind) triple."""
    key = np.array([run_seed & _MASK64, _PHILOX_SALT], dtype=np.uint64)
    counter = np.array([0, 0, stream_kind, sensor], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


@dataclass(frozen=True)
class DebugTrace:
    """Per-slot arrays recorded when a run is executed in debug mode."""

    w: np.ndarray         # (n, L) statistic after each slot's update
    obs: np.ndarray       # (n, L) observation, nan on skipped slots
    sampled: np.ndarray   # (n, L) uint8
    fusion_stat: np.ndarray  # (n,)


@dataclass(frozen=True)
class RunTrace:
    """Outcome of one simulated run."""

    stop_slot: int
    fired: bool
    change_point: float
    samples_pre: np.ndarray
    samples_post: np.ndarray
    trans_pre: np.ndarray
    trans_post: np.ndarray
    final_w: np.ndarray
    max_skip_run: np.ndarray
    debug: Optional[DebugTrace] = None

    @property
    def censored(self) -> bool:
        return not self.fired

    @property
    def samples_total(self) -> np.ndarray:
        return self.samples_pre + self.samples_post

    @property
    def trans_total(self) -> np.ndarray:
        return self.trans_pre + self.trans_post


@dataclass(frozen=True)
class RunConfig:
    """Everything one run needs: scenario, policy, cap, seed, start states."""

    scenario: Scenario
    policy: FusionPolicy
    cap: int
    seed: int
    initial_states: Optional[tuple] = None

    def __post_init__(self):
        if self.cap < 1:
            raise ConfigurationError(f"cap must be >= 1, got {self.cap}")
        sensors = self.scenario.sensors
        if self.initial_states is not None:
            object.__setattr__(self, "initial_states",
                               tuple(float(x) for x in self.initial_states))
            if len(self.initial_states) != len(sensors):
                raise ConfigurationError("initial_states length must match sensor count")
            for x, s in zip(self.initial_states, sensors):
                if x < -s.h:
                    raise ConfigurationError(f"initial state {x} below clamp floor -{s.h}")
        if self.policy.rule == "max":
            dmax = max(s.d_local for s in sensors)
            if not self.policy.threshold_a > dmax:
                raise ConfigurationError(
                    f"max rule requires threshold above every censoring level (max D = {dmax})")


def _pack(scenario: Scenario, policy: FusionPolicy, initial_states):
    """Flatten scenario and policy into the arrays the kernels consume."""
    sensors = scenario.sensors
    n = len(sensors)
    kind = np.zeros(n, dtype=np.int64)
    g_mean_pre = np.zeros(n)
    g_mean_post = np.zeros(n)
    g_sd = np.ones(n)
    llr_a = np.zeros(n)
    llr_b = np.zeros(n)
    katoms = max((len(s.pre.support) for s in sensors if isinstance(s.pre, Discrete)),
                 default=1)
    natoms = np.ones(n, dtype=np.int64)
    support = np.zeros((n, katoms))
    cdf_pre = np.ones((n, katoms))
    cdf_post = np.ones((n, katoms))
    llr_tab = np.zeros((n, katoms))
    for i, s in enumerate(sensors):
        if isinstance(s.pre, Gaussian):
            kind[i] = 0
            g_mean_pre[i] = s.pre.mean
            g_mean_post[i] = s.post.mean
            g_sd[i] = math.sqrt(s.pre.variance)
            llr_a[i] = (s.post.mean - s.pre.mean) / s.pre.variance
            llr_b[i] = (s.pre.mean * s.pre.mean - s.post.mean * s.post.mean) / (2.0 * s.pre.variance)
        else:
            kind[i] = 1
            k = len(s.pre.support)
            natoms[i] = k
            support[i, :k] = s.pre.support
            acc = 0.0
            for j, p in enumerate(s.pre.probs):
                acc += p
                cdf_pre[i, j] = acc
            acc = 0.0
            for j, p in enumerate(s.post.probs):
                acc += p
                cdf_post[i, j] = acc
            for j in range(k):
                llr_tab[i, j] = math.log(s.post.probs[j] / s.pre.probs[j])
    mu = np.array([s.mu for s in sensors])
    h = np.array([s.h for s in sensors])
    d = np.array([s.d_local for s in sensors])
    w0 = np.zeros(n) if initial_states is None else np.array(initial_states, dtype=np.float64)
    affected = np.zeros(n, dtype=np.uint8)
    for k in scenario.affected:
        affected[k - 1] = 1
    rule = _RULE_CODES[policy.rule]
    if policy.rule == "all":
        allcut = de_all_weights(scenario) * policy.threshold_a
    else:
        allcut = np.zeros(n)
    change_slot = _INF_SLOT if scenario.change_point == math.inf else int(scenario.change_point)
    sampling_prob = policy.sampling_prob if policy.sampling_prob is not None else 1.0
    return (kind, g_mean_pre, g_mean_post, g_sd, llr_a, llr_b,
            natoms, support, cdf_pre, cdf_post, llr_tab,
            mu, h, d, w0, affected, change_slot, rule, allcut, sampling_prob)


def _streams(cfg: RunConfig, run_index: int):
    run_seed = (cfg.seed ^ run_index) & _MASK64
    n = cfg.scenario.n_sensors
    obs = [substream(run_seed, l, STREAM_OBS) for l in range(n)]
    coins = None
    if cfg.policy.rule == "fractional_sum":
        coins = [substream(run_seed, l, STREAM_COIN) for l in range(n)]
    return obs, coins


_EMPTY_2D = np.empty((0, 0), dtype=np.float64)
_EMPTY_2D_U8 = np.empty((0, 0), dtype=np.uint8)
_EMPTY_1D = np.empty(0, dtype=np.float64)

_DEBUG_CAP_LIMIT = 200_000


def _run_index(cfg: RunConfig, run_index: int, debug: bool = False) -> RunTrace:
    packed = _pack(cfg.scenario, cfg.policy, cfg.initial_states)
    (kind, g_mean_pre, g_mean_post, g_sd, llr_a, llr_b, natoms, support,
     cdf_pre, cdf_post, llr_tab, mu, h, d, w0, affected, change_slot,
     rule, allcut, sampling_prob) = packed
    n_sensors = kind.shape[0]
    if debug:
        if cfg.cap > _DEBUG_CAP_LIMIT:
            raise ConfigurationError(f"debug traces require cap <= {_DEBUG_CAP_LIMIT}")
        dbg_w = np.zeros((cfg.cap, n_sensors))
        dbg_obs = np.zeros((cfg.cap, n_sensors))
        dbg_sampled = np.zeros((cfg.cap, n_sensors), dtype=np.uint8)
        dbg_fusion = np.zeros(cfg.cap)
    else:
        dbg_w = dbg_obs = _EMPTY_2D
        dbg_sampled = _EMPTY_2D_U8
        dbg_fusion = _EMPTY_1D
    obs_gens, coin_gens = _streams(cfg, run_index)
    (stop, fired, samples_pre, samples_post, trans_pre, trans_post,
     final_w, max_skip) = kernel().run_policy(
        obs_gens, coin_gens, kind, g_mean_pre, g_mean_post, g_sd, llr_a, llr_b,
        natoms, support, cdf_pre, cdf_post, llr_tab, mu, h, d, w0, affected,
        change_slot, rule, cfg.policy.threshold_a, allcut, sampling_prob, cfg.cap,
        dbg_w, dbg_obs, dbg_sampled, dbg_fusion)
    if cfg.policy.rule in ("max", "sum", "all"):
        # a transmission needs w above a nonnegative level, hence a sampled slot
        assert (trans_pre + trans_post <= samples_pre + samples_post).all()
    dbg = None
    if debug:
        dbg = DebugTrace(w=dbg_w[:stop], obs=dbg_obs[:stop],
                         sampled=dbg_sampled[:stop], fusion_stat=dbg_fusion[:stop])
    return RunTrace(stop_slot=int(stop), fired=bool(fired),
                    change_point=cfg.scenario.change_point,
                    samples_pre=samples_pre, samples_post=samples_post,
                    trans_pre=trans_pre, trans_post=trans_post,
                    final_w=final_w, max_skip_run=max_skip, debug=dbg)


def run_once(cfg: RunConfig, debug: bool = False) -> RunTrace:
    """Simulate a single run (run index 0)."""
    return _run_index(cfg, 0, debug=debug)


def _worker_traces(args):
    cfg, lo, hi = args
    return [_run_index(cfg, i) for i in range(lo, hi)]


def run_batch(cfg: RunConfig, runs: int, workers: int = 1) -> list:
    """Simulate `runs` independent runs; run i uses seed cfg.seed XOR i.

    The result is identical for any worker count: each run is a pure
    function of (cfg, i) and results are assembled in run order.
    """
    if runs < 1:
        raise ConfigurationError(f"runs must be >= 1, got {runs}")
    if workers <= 1 or runs < 4:
        return [_run_index(cfg, i) for i in range(runs)]
    chunk = max(1, math.ceil(runs / (workers * 4)))
    tasks = [(cfg, lo, min(lo + chunk, runs)) for lo in range(0, runs, chunk)]
    out = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_worker_traces, tasks):
            out.extend(part)
    return out


def run_fractional_baseline(cfg: RunConfig, runs: int, workers: int = 1) -> list:
    """Batch runner for the coin-flip sampling baseline."""
    if cfg.policy.rule != "fractional_sum":
        raise ConfigurationError("run_fractional_baseline requires the fractional_sum rule")
    return run_batch(cfg, runs, workers=workers)


def _worker_stops(args):
    cfg, lo, hi, thresholds = args
    packed = _pack(cfg.scenario, cfg.policy, cfg.initial_states)
    (kind, g_mean_pre, g_mean_post, g_sd, llr_a, llr_b, natoms, support,
     cdf_pre, cdf_post, llr_tab, mu, h, d, w0, affected, change_slot,
     rule, _allcut, sampling_prob) = packed
    out = np.empty((hi - lo, thresholds.shape[0]), dtype=np.int64)
    for i in range(lo, hi):
        obs_gens, coin_gens = _streams(cfg, i)
        out[i - lo] = kernel().run_policy_stops(
            obs_gens, coin_gens, kind, g_mean_pre, g_mean_post, g_sd, llr_a, llr_b,
            natoms, support, cdf_pre, cdf_post, llr_tab, mu, h, d, w0, affected,
            change_slot, rule, thresholds, sampling_prob, cfg.cap)
    return out


def stop_times_for_thresholds(cfg: RunConfig, runs: int, thresholds,
                              workers: int = 1) -> np.ndarray:
    """Stop slot of each run for every threshold, (runs, K) int64.

    thresholds must be ascending. The sensor statistics do not depend on
    the fusion threshold, so one pass per run serves all thresholds;
    entries are cfg.cap where the statistic never crossed. Used by
    calibration. Not available for the all rule with K > 1 (its
    per-sensor cuts depend on the threshold).
    """
    thr = np.ascontiguousarray(thresholds, dtype=np.float64)
    if (np.diff(thr) < 0).any():
        raise ConfigurationError("thresholds must be ascending")
    if cfg.policy.rule == "all":
        if thr.shape[0] != 1:
            raise ConfigurationError("the all rule supports single-threshold stop times only")
        one = RunConfig(cfg.scenario, cfg.policy.with_threshold(float(thr[0])),
                        cfg.cap, cfg.seed, cfg.initial_states)
        traces = run_batch(one, runs, workers=workers)
        return np.array([[t.stop_slot] for t in traces], dtype=np.int64)
    if workers <= 1 or runs < 4:
        return _worker_stops((cfg, 0, runs, thr))
    chunk = max(1, math.ceil(runs / (workers * 4)))
    tasks = [(cfg, lo, min(lo + chunk, runs), thr) for lo in range(0, runs, chunk)]
    parts = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_worker_stops, tasks):
            parts.append(part)
    return np.vstack(parts)


def decusum_trajectory(llr: np.ndarray, mu: float, h: float, w0: float = 0.0):
    """Statistic path over a given per-slot LLR sequence; (w, sampled)."""
    return kernel().decusum_path(np.ascontiguousarray(llr, dtype=np.float64), mu, h, w0)


def cusum_trajectory(llr: np.ndarray, c0: float = 0.0) -> np.ndarray:
    """CuSum path over a given per-slot LLR sequence."""
    return kernel().cusum_path(np.ascontiguousarray(llr, dtype=np.float64), c0)


def sample_path_trace(scenario: Scenario, sensor: int = 1, length: int = 400,
                      seed: int = 0) -> dict:
    """Single-sensor debug trace for plotting: observations drawn every
    slot, with the data-efficient statistic (consuming only its sampled
    slots) and the CuSum over the same observations.

    Returns columns slot, sampled, observation, decusum, cusum.
    """
    from .models import log_likelihood_ratio, sample

    s = scenario.sensors[sensor - 1]
    gen = substream(seed & _MASK64, sensor - 1, STREAM_OBS)
    gamma = scenario.change_point if scenario.change_point != math.inf else _INF_SLOT
    is_affected = sensor in scenario.affected
    obs = np.empty(length)
    llr = np.empty(length)
    for n in range(1, length + 1):
        density = s.post if (is_affected and n >= gamma) else s.pre
        x = sample(density, gen)
        obs[n - 1] = x
        llr[n - 1] = log_likelihood_ratio(s.pre, s.post, x)
    w, sampled = decusum_trajectory(llr, s.mu, s.h)
    c = cusum_trajectory(llr)
    return {
        "slot": np.arange(1, length + 1),
        "sampled": sampled.astype(np.int64),
        "observation": obs,
        "decusum": w,
        "cusum": c,
    }
