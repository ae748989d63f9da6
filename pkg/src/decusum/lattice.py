"""Exact pre-change analysis for discrete sensors on a common lattice.

When the LLR values, mu, the thresholds, and the clamp depth all sit on
a shared grid of step delta, the detector statistic is a finite Markov
chain and its pre-change quantities solve small linear systems:

  * expected stop time (hence FAR) of the censored detector at a fusion
    threshold, via the absorbing-chain equation (I - Q) t = 1;
  * ladder-cycle quantities E[tau-], E[sleep], E[U_D] (hence PDC, PTC),
    via expected transient visits x = e_0 (I - Q)^{-1} of the LLR walk
    absorbed at its first negative value.

The walk for the ladder analysis is unbounded above; it is truncated at
a ceiling of 64 nats, where the residual mass is below e^-64 (the
pre-change walk has unit Lundberg exponent), far under solver precision.
Forward-evolution re-computations of the same quantities are provided as
an independent numerical cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .gridding import common_step as _common_step
from .gridding import to_steps as _to_steps
from .metrics import RenewalQuantities
from .models import Discrete, SensorModel

_D_INF_STEPS = 1 << 62
_CEILING_NATS = 64.0


@dataclass(frozen=True)
class LatticeModel:
    """A sensor model reduced to integer lattice steps of size `step`."""

    step: float
    llr_steps: tuple
    probs_pre: tuple
    mu_steps: int
    h_steps: int
    a_steps: int
    d_steps: int

    def __post_init__(self):
        if self.step <= 0:
            raise ConfigurationError("lattice step must be positive")
        if self.mu_steps < 1 or self.a_steps < 1 or self.h_steps < 0 or self.d_steps < 0:
            raise ConfigurationError("invalid lattice step counts")
        if len(self.llr_steps) != len(self.probs_pre):
            raise ConfigurationError("llr_steps and probs_pre must align")

    @property
    def n_states(self) -> int:
        return self.h_steps + self.a_steps + 1


def lattice_build(model: SensorModel, a: float, max_states: int = 100_000) -> LatticeModel:
    """Validate commensurability and reduce a discrete sensor model to a lattice.

    a is the fusion threshold the stop-time analysis will use. Requires a
    finite clamp depth; an infinite censoring level is allowed (it maps
    to a sentinel above every reachable state).
    """
    if not isinstance(model.pre, Discrete):
        raise ConfigurationError("lattice analysis requires a discrete sensor model")
    if model.h == math.inf:
        raise ConfigurationError("lattice analysis requires finite h")
    if not a > 0:
        raise ConfigurationError(f"threshold a must be positive, got {a}")
    llrs = [math.log(pp / qq) for pp, qq in zip(model.post.probs, model.pre.probs)]
    anchors = list(llrs) + [model.mu, a]
    if model.h > 0:
        anchors.append(model.h)
    if 0 < model.d_local < math.inf:
        anchors.append(model.d_local)
    step = _common_step(anchors)
    llr_steps = tuple(_to_steps(v, step, f"llr[{i}]") for i, v in enumerate(llrs))
    mu_steps = _to_steps(model.mu, step, "mu")
    h_steps = _to_steps(model.h, step, "h")
    a_steps = _to_steps(a, step, "a")
    d_steps = _D_INF_STEPS if model.d_local == math.inf else _to_steps(model.d_local, step, "d")
    lm = LatticeModel(step=step, llr_steps=llr_steps, probs_pre=model.pre.probs,
                      mu_steps=mu_steps, h_steps=h_steps, a_steps=a_steps, d_steps=d_steps)
    if lm.n_states > max_states:
        raise ConfigurationError(f"lattice needs {lm.n_states} states, above the {max_states} bound")
    return lm


def _detector_matrix(lm: LatticeModel) -> np.ndarray:
    """Transient transition matrix of the clamped detector, states -h..a."""
    n = lm.n_states
    h, a, m = lm.h_steps, lm.a_steps, lm.mu_steps
    q = np.zeros((n, n))
    for s in range(-h, a + 1):
        i = s + h
        if s < 0:
            nxt = min(s + m, 0)
            q[i, nxt + h] = 1.0
        else:
            for k, p in zip(lm.llr_steps, lm.probs_pre):
                nxt = max(s + k, -h)
                if nxt > a:
                    continue  # absorbed
                q[i, nxt + h] += p
    return q


def exact_mean_stop(lm: LatticeModel) -> float:
    """Expected pre-change slots until the statistic first exceeds a.

    Solves (I - Q) t = 1 from the start state 0; sleep slots below zero
    are unit-time deterministic moves. FAR of the single-sensor policy is
    the reciprocal of this value.
    """
    q = _detector_matrix(lm)
    n = lm.n_states
    try:
        t = np.linalg.solve(np.eye(n) - q, np.ones(n))
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError(f"absorbing state unreachable: {exc}") from exc
    return float(t[lm.h_steps])


def exact_far(lm: LatticeModel) -> float:
    return 1.0 / exact_mean_stop(lm)


def _walk_matrix(lm: LatticeModel) -> tuple:
    """Transient matrix of the unclamped LLR walk on 0..M, absorbed below 0.

    Returns (Q, ceiling M). Mass that would pass the ceiling is dropped;
    the ceiling sits 64 nats up, so the loss is below e^-64.
    """
    ceiling = int(math.ceil(_CEILING_NATS / lm.step)) + max(abs(k) for k in lm.llr_steps) + 1
    if ceiling > 5000:  # dense solve at desk scale
        raise ConfigurationError("lattice step too fine for the ladder-walk ceiling")
    n = ceiling + 1
    q = np.zeros((n, n))
    for s in range(n):
        for k, p in zip(lm.llr_steps, lm.probs_pre):
            nxt = s + k
            if 0 <= nxt <= ceiling:
                q[s, nxt] += p
    return q, ceiling


def exact_renewal_quantities(lm: LatticeModel) -> RenewalQuantities:
    """Exact E[tau-], E[sleep slots], E[U_D] by first-step analysis.

    x = expected visit counts of the walk started at 0 before absorption;
    the ladder-height law follows from the absorbing jumps, the sleep
    count from its clamped magnitude in mu-steps.
    """
    q, ceiling = _walk_matrix(lm)
    n = ceiling + 1
    e0 = np.zeros(n)
    e0[0] = 1.0
    try:
        visits = np.linalg.solve((np.eye(n) - q).T, e0)
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError(f"ladder walk has no absorption: {exc}") from exc
    mean_tau = float(visits.sum())
    mean_sleep = 0.0
    for s in range(n):
        if visits[s] == 0.0:
            continue
        for k, p in zip(lm.llr_steps, lm.probs_pre):
            v = s + k
            if v < 0:
                clamped = min(-v, lm.h_steps)
                slots = -(-clamped // lm.mu_steps)  # ceil division
                mean_sleep += visits[s] * p * slots
    if lm.d_steps >= n:
        mean_exceed = 0.0
    else:
        mean_exceed = float(visits[lm.d_steps + 1:].sum())
    return RenewalQuantities(mean_ladder_epoch=mean_tau, mean_sleep_slots=mean_sleep,
                             mean_exceed_count=mean_exceed, n_cycles=0)


def exact_pdc_ptc(lm: LatticeModel) -> tuple:
    """Exact duty cycle and transmission cost of the lattice sensor."""
    rq = exact_renewal_quantities(lm)
    cycle = rq.mean_ladder_epoch + rq.mean_sleep_slots
    return rq.mean_ladder_epoch / cycle, rq.mean_exceed_count / cycle


def forward_mean_stop(lm: LatticeModel, mass_tol: float = 1e-16,
                      max_steps: int = 10_000_000) -> float:
    """Independent check of exact_mean_stop by distribution evolution.

    Enumerates all slot outcomes grouped by state and sums the survival
    function: E[tau] = sum_n P(tau > n). Stops once the surviving mass is
    below mass_tol, whose remaining contribution is negligible at the
    1e-9 comparison level.
    """
    q = _detector_matrix(lm)
    mass = np.zeros(lm.n_states)
    mass[lm.h_steps] = 1.0
    total = 0.0
    for _ in range(max_steps):
        alive = mass.sum()
        if alive <= mass_tol:
            return total
        total += alive
        mass = mass @ q
    raise RuntimeError("forward evolution did not converge; model may lack upward drift")


def forward_renewal_quantities(lm: LatticeModel, mass_tol: float = 1e-16,
                               max_steps: int = 10_000_000) -> RenewalQuantities:
    """Independent check of exact_renewal_quantities by distribution evolution."""
    q, ceiling = _walk_matrix(lm)
    n = ceiling + 1
    mass = np.zeros(n)
    mass[0] = 1.0
    mean_tau = 0.0
    mean_sleep = 0.0
    mean_exceed = 0.0
    for _ in range(max_steps):
        alive = mass.sum()
        if alive <= mass_tol:
            return RenewalQuantities(mean_ladder_epoch=mean_tau, mean_sleep_slots=mean_sleep,
                                     mean_exceed_count=mean_exceed, n_cycles=0)
        mean_tau += alive
        for s in range(n):
            if mass[s] == 0.0:
                continue
            for k, p in zip(lm.llr_steps, lm.probs_pre):
                v = s + k
                if v < 0:
                    clamped = min(-v, lm.h_steps)
                    slots = -(-clamped // lm.mu_steps)
                    mean_sleep += mass[s] * p * slots
        mass = mass @ q
        if lm.d_steps < n:
            mean_exceed += float(mass[lm.d_steps + 1:].sum())
    raise RuntimeError("forward evolution did not converge; model may lack negative drift")
