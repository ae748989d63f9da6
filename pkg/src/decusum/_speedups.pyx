# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation kernels.

Mirrors _reference.py operation for operation; both backends consume the
same numpy BitGenerator streams through the same distribution functions,
so their outputs are bitwise identical. See setup.py for the FMA note.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport NAN, ceil as c_ceil
from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport random_standard_normal, random_standard_uniform

cnp.import_array()

cdef const char *CAPSULE_NAME = "BitGenerator"

RULE_MAX = 0
RULE_SUM = 1
RULE_ALL = 2
RULE_ORACLE = 3
RULE_FRACTIONAL = 4

DEF R_MAX = 0
DEF R_SUM = 1
DEF R_ALL = 2
DEF R_ORACLE = 3
DEF R_FRACTIONAL = 4


cdef bitgen_t *_bitgen(object gen) except NULL:
    return <bitgen_t *> PyCapsule_GetPointer(gen.bit_generator.capsule, CAPSULE_NAME)


cdef inline double _draw_llr(bitgen_t *rng, Py_ssize_t l, bint use_post,
                             const long long[::1] kind,
                             const double[::1] g_mean_pre, const double[::1] g_mean_post,
                             const double[::1] g_sd,
                             const double[::1] llr_a, const double[::1] llr_b,
                             const long long[::1] natoms,
                             const double[:, ::1] support,
                             const double[:, ::1] cdf_pre, const double[:, ::1] cdf_post,
                             const double[:, ::1] llr_tab,
                             double *x_out) noexcept nogil:
    cdef double m, x, u
    cdef Py_ssize_t k, last
    if kind[l] == 0:
        m = g_mean_post[l] if use_post else g_mean_pre[l]
        x = m + g_sd[l] * random_standard_normal(rng)
        x_out[0] = x
        return llr_a[l] * x + llr_b[l]
    u = random_standard_uniform(rng)
    k = 0
    last = natoms[l] - 1
    if use_post:
        while k < last and u >= cdf_post[l, k]:
            k += 1
    else:
        while k < last and u >= cdf_pre[l, k]:
            k += 1
    x_out[0] = support[l, k]
    return llr_tab[l, k]


def cusum_path(const double[::1] llr, double c0=0.0):
    cdef Py_ssize_t n = llr.shape[0], i
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double c = c0
    for i in range(n):
        c = c + llr[i]
        if c < 0.0:
            c = 0.0
        out[i] = c
    return out_arr


def decusum_path(const double[::1] llr, double mu, double h, double w0=0.0):
    cdef Py_ssize_t n = llr.shape[0], i
    out_arr = np.empty(n, dtype=np.float64)
    sampled_arr = np.empty(n, dtype=np.uint8)
    cdef double[::1] out = out_arr
    cdef unsigned char[::1] sampled = sampled_arr
    cdef double floor = 0.0 if h == 0.0 else -h
    cdef double w = w0
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
    return out_arr, sampled_arr


def run_policy(list obs_gens, coin_gens,
               const long long[::1] kind,
               const double[::1] g_mean_pre, const double[::1] g_mean_post,
               const double[::1] g_sd,
               const double[::1] llr_a, const double[::1] llr_b,
               const long long[::1] natoms,
               const double[:, ::1] support,
               const double[:, ::1] cdf_pre, const double[:, ::1] cdf_post,
               const double[:, ::1] llr_tab,
               const double[::1] mu, const double[::1] h, const double[::1] d,
               const double[::1] w0,
               const unsigned char[::1] affected,
               long long change_slot, int rule, double threshold,
               const double[::1] allcut, double sampling_prob, long long cap,
               double[:, ::1] dbg_w, double[:, ::1] dbg_obs,
               unsigned char[:, ::1] dbg_sampled, double[::1] dbg_fusion):
    cdef Py_ssize_t L = kind.shape[0], l
    cdef bint record = dbg_fusion.shape[0] > 0
    cdef long long n, stop = cap
    cdef bint fired = False, fire, pre_phase, use_post
    cdef double fusion, inc, wl, x, v, c_oracle = 0.0
    cdef int n_tx

    w_arr = np.asarray(w0, dtype=np.float64).copy()
    floors_arr = np.where(np.asarray(h) == 0.0, 0.0, -np.asarray(h))
    samples_pre_arr = np.zeros(L, dtype=np.int64)
    samples_post_arr = np.zeros(L, dtype=np.int64)
    trans_pre_arr = np.zeros(L, dtype=np.int64)
    trans_post_arr = np.zeros(L, dtype=np.int64)
    cur_skip_arr = np.zeros(L, dtype=np.int64)
    max_skip_arr = np.zeros(L, dtype=np.int64)
    cdef double[::1] w = w_arr
    cdef double[::1] floors = floors_arr
    cdef long long[::1] samples_pre = samples_pre_arr
    cdef long long[::1] samples_post = samples_post_arr
    cdef long long[::1] trans_pre = trans_pre_arr
    cdef long long[::1] trans_post = trans_post_arr
    cdef long long[::1] cur_skip = cur_skip_arr
    cdef long long[::1] max_skip = max_skip_arr

    ptr_arr = np.empty(L, dtype=np.uintp)
    coin_ptr_arr = np.empty(L, dtype=np.uintp)
    cdef size_t[::1] ptrs = ptr_arr
    cdef size_t[::1] coin_ptrs = coin_ptr_arr
    for l in range(L):
        ptrs[l] = <size_t> _bitgen(obs_gens[l])
        if rule == R_FRACTIONAL:
            coin_ptrs[l] = <size_t> _bitgen(coin_gens[l])

    for n in range(1, cap + 1):
        pre_phase = n < change_slot
        fusion = 0.0
        n_tx = 0
        fire = False

        if rule == R_ORACLE:
            inc = 0.0
            for l in range(L):
                use_post = (not pre_phase) and affected[l]
                v = _draw_llr(<bitgen_t *> ptrs[l], l, use_post, kind, g_mean_pre,
                              g_mean_post, g_sd, llr_a, llr_b, natoms, support,
                              cdf_pre, cdf_post, llr_tab, &x)
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
                for l in range(L):
                    dbg_w[n - 1, l] = c_oracle
            fire = fusion > threshold
        elif rule == R_FRACTIONAL:
            for l in range(L):
                if random_standard_uniform(<bitgen_t *> coin_ptrs[l]) < sampling_prob:
                    use_post = (not pre_phase) and affected[l]
                    v = _draw_llr(<bitgen_t *> ptrs[l], l, use_post, kind, g_mean_pre,
                                  g_mean_post, g_sd, llr_a, llr_b, natoms, support,
                                  cdf_pre, cdf_post, llr_tab, &x)
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
                        dbg_obs[n - 1, l] = NAN
                        dbg_sampled[n - 1, l] = 0
                fusion += w[l]
                if record:
                    dbg_w[n - 1, l] = w[l]
            fire = fusion > threshold
        else:
            for l in range(L):
                if w[l] >= 0.0:
                    use_post = (not pre_phase) and affected[l]
                    v = _draw_llr(<bitgen_t *> ptrs[l], l, use_post, kind, g_mean_pre,
                                  g_mean_post, g_sd, llr_a, llr_b, natoms, support,
                                  cdf_pre, cdf_post, llr_tab, &x)
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
                        dbg_obs[n - 1, l] = NAN
                        dbg_sampled[n - 1, l] = 0
                w[l] = wl
                if record:
                    dbg_w[n - 1, l] = wl
                if rule == R_ALL:
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
                    if rule == R_MAX:
                        if wl > fusion:
                            fusion = wl
                    else:
                        fusion += wl
            if rule == R_ALL:
                fusion = <double> n_tx
                fire = n_tx == L
            else:
                fire = fusion > threshold

        if record:
            dbg_fusion[n - 1] = fusion
        if fire:
            stop = n
            fired = True
            break

    if rule == R_ORACLE:
        final_w = np.full(L, c_oracle, dtype=np.float64)
    else:
        final_w = w_arr
    return (stop, fired, samples_pre_arr, samples_post_arr,
            trans_pre_arr, trans_post_arr, final_w, max_skip_arr)


def run_policy_stops(list obs_gens, coin_gens,
                     const long long[::1] kind,
                     const double[::1] g_mean_pre, const double[::1] g_mean_post,
                     const double[::1] g_sd,
                     const double[::1] llr_a, const double[::1] llr_b,
                     const long long[::1] natoms,
                     const double[:, ::1] support,
                     const double[:, ::1] cdf_pre, const double[:, ::1] cdf_post,
                     const double[:, ::1] llr_tab,
                     const double[::1] mu, const double[::1] h, const double[::1] d,
                     const double[::1] w0,
                     const unsigned char[::1] affected,
                     long long change_slot, int rule,
                     const double[::1] thresholds, double sampling_prob, long long cap):
    cdef Py_ssize_t L = kind.shape[0], l
    cdef Py_ssize_t K = thresholds.shape[0], ptr = 0
    cdef long long n
    cdef bint pre_phase, use_post
    cdef double fusion, inc, wl, x, v, c_oracle = 0.0

    stops_arr = np.full(K, cap, dtype=np.int64)
    cdef long long[::1] stops = stops_arr
    w_arr = np.asarray(w0, dtype=np.float64).copy()
    floors_arr = np.where(np.asarray(h) == 0.0, 0.0, -np.asarray(h))
    cdef double[::1] w = w_arr
    cdef double[::1] floors = floors_arr

    ptr_arr = np.empty(L, dtype=np.uintp)
    coin_ptr_arr = np.empty(L, dtype=np.uintp)
    cdef size_t[::1] ptrs = ptr_arr
    cdef size_t[::1] coin_ptrs = coin_ptr_arr
    for l in range(L):
        ptrs[l] = <size_t> _bitgen(obs_gens[l])
        if rule == R_FRACTIONAL:
            coin_ptrs[l] = <size_t> _bitgen(coin_gens[l])

    for n in range(1, cap + 1):
        pre_phase = n < change_slot
        fusion = 0.0
        if rule == R_ORACLE:
            inc = 0.0
            for l in range(L):
                use_post = (not pre_phase) and affected[l]
                v = _draw_llr(<bitgen_t *> ptrs[l], l, use_post, kind, g_mean_pre,
                              g_mean_post, g_sd, llr_a, llr_b, natoms, support,
                              cdf_pre, cdf_post, llr_tab, &x)
                if affected[l]:
                    inc += v
            c_oracle = c_oracle + inc
            if c_oracle < 0.0:
                c_oracle = 0.0
            fusion = c_oracle
        elif rule == R_FRACTIONAL:
            for l in range(L):
                if random_standard_uniform(<bitgen_t *> coin_ptrs[l]) < sampling_prob:
                    use_post = (not pre_phase) and affected[l]
                    v = _draw_llr(<bitgen_t *> ptrs[l], l, use_post, kind, g_mean_pre,
                                  g_mean_post, g_sd, llr_a, llr_b, natoms, support,
                                  cdf_pre, cdf_post, llr_tab, &x)
                    wl = w[l] + v
                    if wl < 0.0:
                        wl = 0.0
                    w[l] = wl
                fusion += w[l]
        else:
            for l in range(L):
                if w[l] >= 0.0:
                    use_post = (not pre_phase) and affected[l]
                    v = _draw_llr(<bitgen_t *> ptrs[l], l, use_post, kind, g_mean_pre,
                                  g_mean_post, g_sd, llr_a, llr_b, natoms, support,
                                  cdf_pre, cdf_post, llr_tab, &x)
                    wl = w[l] + v
                    if wl < floors[l]:
                        wl = floors[l]
                else:
                    wl = w[l] + mu[l]
                    if wl > 0.0:
                        wl = 0.0
                w[l] = wl
                if wl > d[l]:
                    if rule == R_MAX:
                        if wl > fusion:
                            fusion = wl
                    else:
                        fusion += wl
        while ptr < K and fusion > thresholds[ptr]:
            stops[ptr] = n
            ptr += 1
        if ptr == K:
            break
    return stops_arr


def ladder_cycles(object gen, long long kind0, double g_mean_pre0, double g_sd0,
                  double llr_a0, double llr_b0, long long natoms0,
                  const double[::1] support0, const double[::1] cdf_pre0,
                  const double[::1] llr_tab0, const long long[::1] llr_int0,
                  double step0, double mu0, double h0, double d0,
                  long long n_cycles, long long cycle_cap):
    cdef bitgen_t *rng = _bitgen(gen)
    tau_arr = np.empty(n_cycles, dtype=np.int64)
    sleep_arr = np.empty(n_cycles, dtype=np.int64)
    exceed_arr = np.empty(n_cycles, dtype=np.int64)
    cdef long long[::1] tau = tau_arr
    cdef long long[::1] sleep = sleep_arr
    cdef long long[::1] exceed = exceed_arr
    cdef double hneg = 0.0 if h0 == 0.0 else -h0
    cdef bint integer_mode = llr_int0.shape[0] > 0
    cdef long long discarded = 0, i = 0, t, u, ks
    cdef double s, x, uu, clamp
    cdef Py_ssize_t k, last
    cdef bint done, negative

    while i < n_cycles:
        s = 0.0
        ks = 0
        u = 0
        t = 0
        done = False
        while t < cycle_cap:
            t += 1
            if kind0 == 0:
                x = g_mean_pre0 + g_sd0 * random_standard_normal(rng)
                s = s + (llr_a0 * x + llr_b0)
            else:
                uu = random_standard_uniform(rng)
                k = 0
                last = natoms0 - 1
                while k < last and uu >= cdf_pre0[k]:
                    k += 1
                if integer_mode:
                    ks += llr_int0[k]
                    s = ks * step0
                else:
                    s = s + llr_tab0[k]
            negative = (ks < 0) if integer_mode else (s < 0.0)
            if negative:
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
        sleep[i] = <long long> c_ceil(-clamp / mu0)
        exceed[i] = u
        i += 1
    return tau_arr, sleep_arr, exceed_arr, discarded
