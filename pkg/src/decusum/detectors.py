"""Per-sensor statistic state machines.

The data-efficient statistic w evolves in two modes. While w >= 0 the
sensor observes and applies the clamped LLR update max(w + llr, -h);
once w drops below zero the sensor sleeps, gaining mu per skipped slot
via min(w + mu, 0) until it reaches zero and wakes. With h = 0 the
statistic never goes negative and the recursion is exactly the CuSum.

Uplink values are plain floats with None standing for NULL (no
transmission); the fusion center treats NULL as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .errors import DomainError
from .models import SensorModel, log_likelihood_ratio


@dataclass(frozen=True)
class DetectorState:
    """Running statistic w at slot n; w always >= -h of the owning model."""

    w: float = 0.0
    took_sample_last: bool = False
    slot: int = 0


def decusum_should_sample(state: DetectorState) -> bool:
    """True iff the next slot is observed (w >= 0; slot 0 always samples)."""
    return state.w >= 0.0


def decusum_step(state: DetectorState, model: SensorModel, obs: Optional[float] = None) -> DetectorState:
    """Advance the statistic one slot.

    obs must be supplied exactly when decusum_should_sample(state) holds;
    passing it in sleep mode (or omitting it in observe mode) is a
    contract violation.
    """
    sampling = decusum_should_sample(state)
    if sampling and obs is None:
        raise DomainError("observation required: detector is in observe mode")
    if not sampling and obs is not None:
        raise DomainError("observation forbidden: detector is in sleep mode")
    if sampling:
        floor = 0.0 if model.h == 0.0 else -model.h
        w = max(state.w + log_likelihood_ratio(model.pre, model.post, obs), floor)
    else:
        w = min(state.w + model.mu, 0.0)
    return DetectorState(w=w, took_sample_last=sampling, slot=state.slot + 1)


def cusum_step(c: float, model: SensorModel, obs: float) -> float:
    """Classical CuSum update max(0, c + llr); the h=0 no-skip special case."""
    return max(0.0, c + log_likelihood_ratio(model.pre, model.post, obs))


def censor(state: DetectorState, model: SensorModel) -> Optional[float]:
    """Uplink value: w when strictly above the local threshold, else NULL."""
    return state.w if state.w > model.d_local else None


def censor_binary(state: DetectorState, threshold: float) -> Optional[float]:
    """One-bit uplink: 1 when w strictly exceeds threshold, else NULL."""
    return 1.0 if state.w > threshold else None


def max_consecutive_skips(model: SensorModel):
    """Upper bound ceil(h/mu) + 1 on any run of skipped slots (inf if h is)."""
    if model.h == math.inf:
        return math.inf
    return math.ceil(model.h / model.mu) + 1
