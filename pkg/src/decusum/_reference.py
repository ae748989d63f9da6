"""Pure-Python simulation kernels.

This module is the reference semantics for the hot loops; the compiled
extension in _speedups.pyx mirrors it operation for operation and must
produce bitwise-identical results (both consume numpy BitGenerators
through the same distribution functions, and the extension is compiled
with FMA contraction disabled).

Fusion rule codes: 0 max, 1 sum, 2 all, 3 oracle CuSum, 4 fractional
sampling with sum-and-hold fusion.
"""

from __future__ import annotations

import math

import numpy as np

RULE_MAX = 0
RULE_SUM = 1
RULE_ALL = 2
RULE_ORACLE = 3
RULE_FRACTIONAL = 4


def cusum_path(llr, c0=0.0):
    """CuSum trajectory over a per-slot LLR sequence."""
    n = llr.shape[0]
    out = np.empty(n, dtype=np.float64)
    c = c0
    for i in range(n):
        c = c + llr[i]
        if c < 0.0:
            c = 0.0
        out[i] = c
    return out


def decusum_path(llr, mu, h, w0=0.0):
    """Data-efficient statistic trajectory over a per-slot LLR sequence.

    llr[i] is consumed only when slot i+1 is observed; skipped slots
    apply the sleep update instead. Returns (w, sampled).
    """
    n = llr.shape[0]
    out = np.empty(n, dtype=np.float64)
    sampled = np.empty(n, dtype=np.uint8)
    floor = 0.0 if h == 0.0 else -h
    w = w0
    for i in range(n):
        if w >= 0.0:
            w = w + llr[i]
            if w < floor:
                w = floor
            sampled[i] = 1
        else:
            w = w + mu
            if w > 0.0:
                w = 0.0
            sampled[i] = 0
        out[i] = w
    return out, sampled


def _draw(gen, l, use_post, kind, g_mean_pre, g_mean_post, g_sd,
          natoms, support, cdf_pre, cdf_post, llr_a, llr_b, llr_tab):
    """One observation and its LLR for sensor l. Consumes one variate."""
    if kind[l] == 0:
        m = g_mean_post[l] if use_post else g_mean_pre[l]
        x = m + g_sd[l] * gen.standard_normal()
        return x, llr_a[l] * x + llr_b[l]
    u = gen.random()
    cdf = cdf_post if use_post else cdf_pre
    k = 0
    last = natoms[l] - 1
    while k < last and u >= cdf[l, k]:
        k += 1
    return support[l, k], llr_tab[l, k]


def run_policy(obs_gens, coin_gens,
               kind, g_mean_pre, g_mean_post, g_sd, llr_a, llr_b,
               natoms, support, cdf_pre, cdf_post, llr_tab,
               mu, h, d, w0, affected, change_slot, rule, threshold,
               allcut, sampling_prob, cap,
               dbg_w, dbg_obs, dbg_sampled, dbg_fusion):
    """Simulate one run of a full policy; returns the trace counters.

    Per slot, every sensor advances using only its own state, uplinks are
    formed, and the fusion rule decides stopping. Observations are drawn
    only for sampled slots. Debug arrays are filled when dbg_fusion is
    nonempty (caller sizes them (cap, L)).
    """
    L = kind.shape[0]
    record = dbg_fusion.shape[0] > 0
    w = w0.astype(np.float64).copy()
    floors = np.where(h == 0.0, 0.0, -h)
    samples_pre = np.zeros(L, dtype=np.int64)
    samples_post = np.zeros(L, dtype=np.int64)
    trans_pre = np.zeros(L, dtype=np.int64)
    trans_post = np.zeros(L, dtype=np.int64)
    cur_skip = np.zeros(L, dtype=np.int64)
    max_skip = np.zeros(L, dtype=np.int64)
    c_oracle = 0.0
    stop = cap
    fired = False

    for n in range(1, cap + 1):
        pre_phase = n < change_slot
        fusion = 0.0
        n_tx = 0

        if rule == RULE_ORACLE:
            inc = 0.0
            for l in range(L):
                use_post = (not pre_phase) and affected[l]
                x, v = _draw(obs_gens[l], l, use_post, kind, g_mean_pre, g_mean_post,
                             g_sd, natoms, support, cdf_pre, cdf_post, llr_a, llr_b, llr_tab)
                if affected[l]:
                    inc += v
                if pre_phase:
                    samples_pre[l] += 1
                    trans_pre[l] += 1
                else:
                    samples_post[l] += 1
                    trans_post[l] += 1
                if record:
                    dbg_obs[n - 1, l] = x
                    dbg_sampled[n - 1, l] = 1
            c_oracle = c_oracle + inc
            if c_oracle < 0.0:
                c_oracle = 0.0
            fusion = c_oracle
            if record:
                dbg_w[n - 1, :] = c_oracle
            fire = fusion > threshold
        elif rule == RULE_FRACTIONAL:
            for l in range(L):
                if coin_gens[l].random() < sampling_prob:
                    use_post = (not pre_phase) and affected[l]
                    x, v = _draw(obs_gens[l], l, use_post, kind, g_mean_pre, g_mean_post,
                                 g_sd, natoms, support, cdf_pre, cdf_post, llr_a, llr_b, llr_tab)
                    wl = w[l] + v
                    if wl < 0.0:
                        wl = 0.0
                    w[l] = wl
                    if pre_phase:
                        samples_pre[l] += 1
                        trans_pre[l] += 1
                    else:
                        samples_post[l] += 1
                        trans_post[l] += 1
                    cur_skip[l] = 0
                    if record:
                        dbg_obs[n - 1, l] = x
                        dbg_sampled[n - 1, l] = 1
                else:
                    cur_skip[l] += 1
                    if cur_skip[l] > max_skip[l]:
                        max_skip[l] = cur_skip[l]
                    if record:
                        dbg_obs[n - 1, l] = math.nan
                        dbg_sampled[n - 1, l] = 0
                fusion += w[l]  # held value equals the current statistic
                if record:
                    dbg_w[n - 1, l] = w[l]
            fire = fusion > threshold
        else:
            for l in range(L):
                if w[l] >= 0.0:
                    use_post = (not pre_phase) and affected[l]
                    x, v = _draw(obs_gens[l], l, use_post, kind, g_mean_pre, g_mean_post,
                                 g_sd, natoms, support, cdf_pre, cdf_post, llr_a, llr_b, llr_tab)
                    wl = w[l] + v
                    if wl < floors[l]:
                        wl = floors[l]
                    if pre_phase:
                        samples_pre[l] += 1
                    else:
                        samples_post[l] += 1
                    cur_skip[l] = 0
                    if record:
                        dbg_obs[n - 1, l] = x
                        dbg_sampled[n - 1, l] = 1
                else:
                    wl = w[l] + mu[l]
                    if wl > 0.0:
                        wl = 0.0
                    cur_skip[l] += 1
                    if cur_skip[l] > max_skip[l]:
                        max_skip[l] = cur_skip[l]
                    if record:
                        dbg_obs[n - 1, l] = math.nan
                        dbg_sampled[n - 1, l] = 0
                w[l] = wl
                if record:
                    dbg_w[n - 1, l] = wl
                if rule == RULE_ALL:
                    if wl > allcut[l]:
                        n_tx += 1
                        if pre_phase:
                            trans_pre[l] += 1
                        else:
                            trans_post[l] += 1
                elif wl > d[l]:
                    if pre_phase:
                        trans_pre[l] += 1
                    else:
                        trans_post[l] += 1
                    if rule == RULE_MAX:
                        if wl > fusion:
                            fusion = wl
                    else:
                        fusion += wl
            if rule == RULE_ALL:
                fusion = float(n_tx)
                fire = n_tx == L
            else:
                fire = fusion > threshold

        if record:
            dbg_fusion[n - 1] = fusion
        if fire:
            stop = n
            fired = True
            break

    final_w = np.full(L, c_oracle, dtype=np.float64) if rule == RULE_ORACLE else w
    return (stop, fired, samples_pre, samples_post, trans_pre, trans_post,
            final_w, max_skip)


def run_policy_stops(obs_gens, coin_gens,
                     kind, g_mean_pre, g_mean_post, g_sd, llr_a, llr_b,
                     natoms, support, cdf_pre, cdf_post, llr_tab,
                     mu, h, d, w0, affected, change_slot, rule,
                     thresholds, sampling_prob, cap):
    """First crossing slot of the fusion statistic for each threshold.

    thresholds must be sorted ascending; entry k gets cap when never
    crossed. The statistic path does not depend on the threshold, so one
    pass serves all of them (used by Monte Carlo calibration).
    """
    L = kind.shape[0]
    K = thresholds.shape[0]
    stops = np.full(K, cap, dtype=np.int64)
    ptr = 0
    w = w0.astype(np.float64).copy()
    floors = np.where(h == 0.0, 0.0, -h)
    c_oracle = 0.0

    for n in range(1, cap + 1):
        pre_phase = n < change_slot
        fusion = 0.0
        if rule == RULE_ORACLE:
            inc = 0.0
            for l in range(L):
                use_post = (not pre_phase) and affected[l]
                _, v = _draw(obs_gens[l], l, use_post, kind, g_mean_pre, g_mean_post,
                             g_sd, natoms, support, cdf_pre, cdf_post, llr_a, llr_b, llr_tab)
                if affected[l]:
                    inc += v
            c_oracle = c_oracle + inc
            if c_oracle < 0.0:
                c_oracle = 0.0
            fusion = c_oracle
        elif rule == RULE_FRACTIONAL:
            for l in range(L):
                if coin_gens[l].random() < sampling_prob:
                    use_post = (not pre_phase) and affected[l]
                    _, v = _draw(obs_gens[l], l, use_post, kind, g_mean_pre, g_mean_post,
                                 g_sd, natoms, support, cdf_pre, cdf_post, llr_a, llr_b, llr_tab)
                    wl = w[l] + v
                    if wl < 0.0:
                        wl = 0.0
                    w[l] = wl
                fusion += w[l]
        else:
            for l in range(L):
                if w[l] >= 0.0:
                    use_post = (not pre_phase) and affected[l]
                    _, v = _draw(obs_gens[l], l, use_post, kind, g_mean_pre, g_mean_post,
                                 g_sd, natoms, support, cdf_pre, cdf_post, llr_a, llr_b, llr_tab)
                    wl = w[l] + v
                    if wl < floors[l]:
                        wl = floors[l]
                else:
                    wl = w[l] + mu[l]
                    if wl > 0.0:
                        wl = 0.0
                w[l] = wl
                if wl > d[l]:
                    if rule == RULE_MAX:
                        if wl > fusion:
                            fusion = wl
                    else:
                        fusion += wl
        while ptr < K and fusion > thresholds[ptr]:
            stops[ptr] = n
            ptr += 1
        if ptr == K:
            break
    return stops


def ladder_cycles(gen, kind0, g_mean_pre0, g_sd0, llr_a0, llr_b0,
                  natoms0, support0, cdf_pre0, llr_tab0, llr_int0, step0,
                  mu0, h0, d0, n_cycles, cycle_cap):
    """Simulate pre-change ladder cycles of a single sensor's LLR walk.

    Each cycle runs the random walk of LLR increments until it first goes
    negative; returns per-cycle (epoch length, sleep slots, count of
    slots strictly above d0). Cycles that fail to go negative within
    cycle_cap are discarded (their count is returned). When llr_int0 is
    nonempty the walk is tracked in integer multiples of step0, which
    keeps the sign of lattice walks exact (float accumulation drifts by
    ulps at revisited zero states).
    """
    tau = np.empty(n_cycles, dtype=np.int64)
    sleep = np.empty(n_cycles, dtype=np.int64)
    exceed = np.empty(n_cycles, dtype=np.int64)
    hneg = 0.0 if h0 == 0.0 else -h0
    integer_mode = llr_int0.shape[0] > 0
    discarded = 0
    i = 0
    while i < n_cycles:
        s = 0.0
        ks = 0
        u = 0
        t = 0
        done = False
        while t < cycle_cap:
            t += 1
            if kind0 == 0:
                x = g_mean_pre0 + g_sd0 * gen.standard_normal()
                s = s + (llr_a0 * x + llr_b0)
            else:
                uu = gen.random()
                k = 0
                last = natoms0 - 1
                while k < last and uu >= cdf_pre0[k]:
                    k += 1
                if integer_mode:
                    ks += llr_int0[k]
                    s = ks * step0
                else:
                    s = s + llr_tab0[k]
            if (ks < 0) if integer_mode else (s < 0.0):
                done = True
                break
            if s > d0:
                u += 1
        if not done:
            discarded += 1
            if discarded > n_cycles:
                raise RuntimeError("ladder walk repeatedly failed to go negative")
            continue
        clamp = s if s > hneg else hneg
        tau[i] = t
        sleep[i] = math.ceil(-clamp / mu0)
        exceed[i] = u
        i += 1
    return tau, sleep, exceed, discarded
