"""Observation models: densities, log-likelihood ratios, KL divergences,
and the multi-sensor change scenario.

Two density families are supported: Gaussian with known variance, and
finite discrete. Detection statistics only ever consume log-likelihood
ratio (LLR) values, so the family acts as an interface; both families
have closed-form LLRs and KL divergences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import ConfigurationError, DomainError, InfiniteDivergenceError

_PROB_SUM_TOL = 1e-12


@dataclass(frozen=True)
class Gaussian:
    """Normal density with known mean and variance."""

    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ConfigurationError(f"gaussian variance must be > 0, got {self.variance}")


@dataclass(frozen=True)
class Discrete:
    """Finite discrete density on distinct real support points."""

    support: tuple
    probs: tuple

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(float(x) for x in self.support))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.support) != len(self.probs) or not self.support:
            raise ConfigurationError("support and probs must be nonempty and equal length")
        if len(set(self.support)) != len(self.support):
            raise ConfigurationError("support values must be distinct")
        if any(p < 0 for p in self.probs):
            raise ConfigurationError("probabilities must be nonnegative")
        if abs(math.fsum(self.probs) - 1.0) > _PROB_SUM_TOL:
            raise ConfigurationError(f"probabilities sum to {math.fsum(self.probs)}, not 1")


Density = Union[Gaussian, Discrete]


def _check_compatible(d_a: Density, d_b: Density) -> None:
    if type(d_a) is not type(d_b):
        raise ConfigurationError("densities must have the same family")
    if isinstance(d_a, Discrete) and d_a.support != d_b.support:
        raise ConfigurationError("discrete densities must share their support")


def log_likelihood_ratio(d_pre: Density, d_post: Density, x: float) -> float:
    """log(f_post(x) / f_pre(x)) for compatible densities.

    For an equal-variance Gaussian pair the linear form a*x + b is used;
    this is the exact form evaluated inside the simulation kernels, so
    results here match kernel statistics bit for bit.
    """
    _check_compatible(d_pre, d_post)
    if isinstance(d_pre, Gaussian):
        if d_pre.variance == d_post.variance:
            a = (d_post.mean - d_pre.mean) / d_pre.variance
            b = (d_pre.mean * d_pre.mean - d_post.mean * d_post.mean) / (2.0 * d_pre.variance)
            return a * x + b
        return (
            0.5 * math.log(d_pre.variance / d_post.variance)
            - (x - d_post.mean) ** 2 / (2.0 * d_post.variance)
            + (x - d_pre.mean) ** 2 / (2.0 * d_pre.variance)
        )
    try:
        k = d_pre.support.index(float(x))
    except ValueError:
        raise DomainError(f"x={x} is not in the discrete support") from None
    p_pre, p_post = d_pre.probs[k], d_post.probs[k]
    if p_pre == 0.0 or p_post == 0.0:
        raise DomainError("log-likelihood ratio undefined at a zero-probability atom")
    return math.log(p_post / p_pre)


def kl_divergence(d_a: Density, d_b: Density) -> float:
    """Kullback-Leibler divergence D(a || b), in nats, closed form.

    Raises InfiniteDivergenceError when b assigns zero mass to an atom
    that a charges (discrete case only; Gaussians are always mutually
    absolutely continuous).
    """
    _check_compatible(d_a, d_b)
    if isinstance(d_a, Gaussian):
        ratio = d_a.variance / d_b.variance
        return 0.5 * (ratio - 1.0 - math.log(ratio) + (d_a.mean - d_b.mean) ** 2 / d_b.variance)
    total = 0.0
    for p_a, p_b in zip(d_a.probs, d_b.probs):
        if p_a == 0.0:
            continue  # 0 * log 0 = 0
        if p_b == 0.0:
            raise InfiniteDivergenceError("D(a||b) infinite: b has a zero where a is positive")
        total += p_a * math.log(p_a / p_b)
    return total


def sample(d: Density, rng: np.random.Generator) -> float:
    """Draw one observation from d.

    Consumes exactly one variate from the generator, in the same way the
    simulation kernels do (standard normal for Gaussian, one uniform for
    discrete inverse-CDF), so paths are reproducible across code paths.
    """
    if isinstance(d, Gaussian):
        return d.mean + math.sqrt(d.variance) * rng.standard_normal()
    u = rng.random()
    acc = 0.0
    for x, p in zip(d.support, d.probs):
        acc += p
        if u < acc:
            return x
    return d.support[-1]


@dataclass(frozen=True)
class SensorModel:
    """Per-stream model: pre/post densities plus detector parameters.

    mu is the sleep credit added per skipped slot, h the clamp depth of
    the statistic (may be math.inf), d_local the censoring threshold for
    uplink transmission.
    """

    pre: Density
    post: Density
    mu: float
    h: float = 0.0
    d_local: float = 0.0

    def __post_init__(self):
        _check_compatible(self.pre, self.post)
        if isinstance(self.pre, Gaussian) and self.pre.variance != self.post.variance:
            raise ConfigurationError("gaussian sensor models require equal variances")
        if not self.mu > 0:
            raise ConfigurationError(f"mu must be > 0, got {self.mu}")
        if self.h < 0:
            raise ConfigurationError(f"h must be >= 0, got {self.h}")
        if self.d_local < 0:
            raise ConfigurationError(f"d_local must be >= 0, got {self.d_local}")
        for a, b in ((self.post, self.pre), (self.pre, self.post)):
            kl = kl_divergence(a, b)
            if not (0.0 < kl < math.inf):
                raise ConfigurationError(
                    f"KL divergence must be finite and positive, got {kl} "
                    "(pre and post must differ)"
                )

    @property
    def kl_post_pre(self) -> float:
        """D(post || pre); the asymptotic delay slope."""
        return kl_divergence(self.post, self.pre)

    @property
    def kl_pre_post(self) -> float:
        """D(pre || post); drives pre-change sleep behavior."""
        return kl_divergence(self.pre, self.post)


@dataclass(frozen=True)
class Scenario:
    """Sensor list, the affected subset (1-based indices), and change point."""

    sensors: tuple
    affected: frozenset = field(default_factory=frozenset)
    change_point: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "sensors", tuple(self.sensors))
        object.__setattr__(self, "affected", frozenset(int(k) for k in self.affected))
        if not self.sensors:
            raise ConfigurationError("scenario needs at least one sensor")
        if not all(isinstance(s, SensorModel) for s in self.sensors):
            raise ConfigurationError("sensors must be SensorModel instances")
        n = len(self.sensors)
        if any(k < 1 or k > n for k in self.affected):
            raise ConfigurationError(f"affected indices must lie in 1..{n}")
        cp = self.change_point
        if cp != math.inf:
            if cp != int(cp) or cp < 1:
                raise ConfigurationError("change_point must be a positive integer or inf")
            object.__setattr__(self, "change_point", int(cp))
            if not self.affected:
                raise ConfigurationError("affected must be nonempty for a finite change point")

    @property
    def n_sensors(self) -> int:
        return len(self.sensors)

    def with_change_point(self, change_point) -> "Scenario":
        return Scenario(self.sensors, self.affected, change_point)


def lower_bound_delay(scenario: Scenario, alpha: float) -> float:
    """First-order lower bound on detection delay at false alarm rate alpha.

    Returns |log alpha| / sum of D(post_k || pre_k) over affected sensors;
    a yardstick for judging simulated delays, valid as alpha -> 0.
    """
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must be in (0, 1], got {alpha}")
    if not scenario.affected:
        raise DomainError("lower bound requires a nonempty affected set")
    total = sum(scenario.sensors[k - 1].kl_post_pre for k in sorted(scenario.affected))
    return abs(math.log(alpha)) / total
