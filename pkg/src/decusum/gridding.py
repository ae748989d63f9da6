"""Detection of a common lattice step among model quantities.

A set of reals is grid-commensurable when every value is an integer
multiple of a shared step delta with a small rational refinement
(denominators up to 4096); irrational ratios fail the round-trip
validation at 1e-12 relative error.
"""

from __future__ import annotations

import math
from fractions import Fraction

from .errors import IncommensurableModelError

_MAX_DENOMINATOR = 4096
_REL_TOL = 1e-12


def common_step(values) -> float:
    """Largest grid unit expressing every value as an integer multiple."""
    nonzero = sorted(abs(v) for v in values if v != 0.0)
    if not nonzero:
        raise IncommensurableModelError("no nonzero quantities to place on a lattice")
    vmin = nonzero[0]
    lcm = 1
    for v in nonzero:
        frac = Fraction(v / vmin).limit_denominator(_MAX_DENOMINATOR)
        if frac.numerator == 0:
            raise IncommensurableModelError(f"value {v} has no small rational ratio to {vmin}")
        lcm = lcm * frac.denominator // math.gcd(lcm, frac.denominator)
    step = vmin / lcm
    for v in values:
        to_steps(v, step, "value")  # round-trip validation
    return step


def to_steps(value: float, step: float, name: str) -> int:
    """Integer multiple of step equal to value, or raise."""
    k = round(value / step)
    if abs(k * step - value) > _REL_TOL * max(1.0, abs(value)):
        raise IncommensurableModelError(
            f"{name}={value} is not an integer multiple of the lattice step {step}")
    return int(k)


def try_integer_steps(values):
    """(step, integer multiples) when commensurable, else None.

    Used by the ladder-cycle kernels: walking a lattice LLR table in
    integer steps makes the sign of the walk exact, where repeated float
    addition drifts by ulps near zero.
    """
    try:
        step = common_step(values)
        return step, [to_steps(v, step, "llr") for v in values]
    except IncommensurableModelError:
        return None
