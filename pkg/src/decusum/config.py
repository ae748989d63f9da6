"""Experiment configuration: a strict TOML schema mirrored onto the
domain objects.

Unknown keys anywhere are errors (silent typos in experiment configs are
the classic reproducibility failure). Exactly one of threshold/alpha
must be given, and per sensor exactly one of mu/beta; beta targets are
inverted through the h=inf duty-cycle bound, alpha targets through the
conservative formulas or Monte Carlo calibration (the CLI's choice).

Schema (all kinds of values shown; lists give per-sensor values):

    [scenario]
    sensors = 10
    change_point = "inf"        # or a positive integer
    affected = [1, 2]           # or: m = 7 (the first m sensors)
    [scenario.pre]
    family = "gaussian"         # mean=, variance=
    mean = 0.0
    variance = 1.0
    [scenario.post]             # discrete: family="discrete", support=, probs=
    family = "gaussian"
    mean = 0.5
    variance = 1.0
    [detector]
    mu = 0.125                  # or: beta = 0.5 ; scalar or list of length L
    h = 10.0                    # "inf" allowed; scalar or list
    d = 0.0                     # "inf" allowed; scalar or list
    sigma = 0.5                 # optional PTC target, checked after estimation
    [policy]
    rule = "sum"                # max | sum | all | oracle_cusum | fractional_sum
    alpha = 1e-3                # or: threshold = 12.5
    sampling_prob = 0.5         # fractional_sum only
    [execution]
    runs = 5000
    cap = 1000000
    seed = 1
    workers = 1
    [output]
    csv = "metrics.csv"
    experiment = "label"        # optional row label
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigurationError
from .models import Density, Discrete, Gaussian, Scenario, SensorModel

_SECTIONS = {
    "scenario": {"sensors", "change_point", "affected", "m", "pre", "post"},
    "detector": {"mu", "beta", "h", "d", "sigma"},
    "policy": {"rule", "threshold", "alpha", "sampling_prob"},
    "execution": {"runs", "cap", "seed", "workers"},
    "output": {"csv", "experiment"},
}


def _reject_unknown(table: dict, allowed, where: str) -> None:
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigurationError(f"unknown key(s) {unknown} in [{where}]")


def _as_extended_float(value, where: str) -> float:
    if isinstance(value, str):
        if value.lower() in ("inf", "+inf", "infinity"):
            return math.inf
        raise ConfigurationError(f"{where}: expected a number or 'inf', got {value!r}")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{where}: expected a number, got {value!r}")
    return float(value)


def _per_sensor(value, n: int, where: str, allow_inf: bool = False):
    if isinstance(value, list):
        if len(value) != n:
            raise ConfigurationError(f"{where}: list must have length {n}, got {len(value)}")
        items = value
    else:
        items = [value] * n
    out = []
    for v in items:
        x = _as_extended_float(v, where)
        if x == math.inf and not allow_inf:
            raise ConfigurationError(f"{where}: 'inf' not allowed here")
        out.append(x)
    return out


def _parse_density(table: dict, where: str) -> Density:
    if not isinstance(table, dict):
        raise ConfigurationError(f"[{where}] must be a table")
    family = table.get("family")
    if family == "gaussian":
        _reject_unknown(table, {"family", "mean", "variance"}, where)
        if "mean" not in table or "variance" not in table:
            raise ConfigurationError(f"[{where}] gaussian needs mean and variance")
        return Gaussian(mean=float(table["mean"]), variance=float(table["variance"]))
    if family == "discrete":
        _reject_unknown(table, {"family", "support", "probs"}, where)
        if "support" not in table or "probs" not in table:
            raise ConfigurationError(f"[{where}] discrete needs support and probs")
        return Discrete(support=tuple(table["support"]), probs=tuple(table["probs"]))
    raise ConfigurationError(f"[{where}] family must be 'gaussian' or 'discrete', got {family!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description, still with unresolved targets.

    mu is None when beta targets were given (resolve with
    build_sensors()); threshold is None when an alpha target was given
    (the CLI resolves it by formula or calibration).
    """

    n_sensors: int
    change_point: float
    affected: tuple
    pre: Density
    post: Density
    mu: Optional[tuple]
    beta: Optional[tuple]
    h: tuple
    d: tuple
    sigma: Optional[tuple]
    rule: str
    threshold: Optional[float]
    alpha: Optional[float]
    sampling_prob: Optional[float]
    runs: int
    cap: int
    seed: int
    workers: int
    csv_path: Optional[str]
    experiment: str

    def build_sensors(self) -> list:
        """SensorModel per stream, resolving beta targets to mu values."""
        from .metrics import mu_for_pdc_target

        sensors = []
        for i in range(self.n_sensors):
            if self.mu is not None:
                mu = self.mu[i]
            else:
                probe = SensorModel(pre=self.pre, post=self.post, mu=1.0,
                                    h=self.h[i], d_local=self.d[i])
                mu = mu_for_pdc_target(probe.kl_pre_post, self.beta[i])
            sensors.append(SensorModel(pre=self.pre, post=self.post, mu=mu,
                                       h=self.h[i], d_local=self.d[i]))
        return sensors

    def build_scenario(self, m: Optional[int] = None,
                       change_point=None) -> Scenario:
        """Scenario with the configured affected set, or the first m sensors."""
        if m is not None:
            if not 0 <= m <= self.n_sensors:
                raise ConfigurationError(f"m={m} outside 0..{self.n_sensors}")
            affected = frozenset(range(1, m + 1))
        else:
            affected = frozenset(self.affected)
        cp = self.change_point if change_point is None else change_point
        return Scenario(sensors=tuple(self.build_sensors()), affected=affected,
                        change_point=cp)


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML experiment config."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config is not valid TOML: {exc}") from exc
    _reject_unknown(raw, _SECTIONS, "top level")
    for name in ("scenario", "policy"):
        if name not in raw:
            raise ConfigurationError(f"missing required section [{name}]")
    scen = raw["scenario"]
    _reject_unknown(scen, _SECTIONS["scenario"], "scenario")
    if "sensors" not in scen or not isinstance(scen["sensors"], int) or scen["sensors"] < 1:
        raise ConfigurationError("[scenario] sensors must be a positive integer")
    n = scen["sensors"]
    if "pre" not in scen or "post" not in scen:
        raise ConfigurationError("[scenario] needs pre and post density tables")
    pre = _parse_density(scen["pre"], "scenario.pre")
    post = _parse_density(scen["post"], "scenario.post")
    change_point = _as_extended_float(scen.get("change_point", "inf"), "scenario.change_point")
    if "affected" in scen and "m" in scen:
        raise ConfigurationError("[scenario] give affected or m, not both")
    if "m" in scen:
        m = scen["m"]
        if not isinstance(m, int) or not 0 <= m <= n:
            raise ConfigurationError(f"[scenario] m must be an integer in 0..{n}")
        affected = tuple(range(1, m + 1))
    else:
        affected = tuple(int(k) for k in scen.get("affected", ()))

    det = raw.get("detector", {})
    _reject_unknown(det, _SECTIONS["detector"], "detector")
    if ("mu" in det) == ("beta" in det):
        raise ConfigurationError("[detector] give exactly one of mu or beta (per sensor)")
    mu = tuple(_per_sensor(det["mu"], n, "detector.mu")) if "mu" in det else None
    beta = None
    if "beta" in det:
        beta = tuple(_per_sensor(det["beta"], n, "detector.beta"))
        for b in beta:
            if not 0 < b < 1:
                raise ConfigurationError(
                    f"[detector] beta targets must be in (0, 1), got {b} (beta=0 is infeasible)")
    h = tuple(_per_sensor(det.get("h", 0.0), n, "detector.h", allow_inf=True))
    d = tuple(_per_sensor(det.get("d", 0.0), n, "detector.d", allow_inf=True))
    sigma = None
    if "sigma" in det:
        sigma = tuple(_per_sensor(det["sigma"], n, "detector.sigma"))

    pol = raw["policy"]
    _reject_unknown(pol, _SECTIONS["policy"], "policy")
    rule = pol.get("rule")
    if rule not in ("max", "sum", "all", "oracle_cusum", "fractional_sum"):
        raise ConfigurationError(f"[policy] unknown rule {rule!r}")
    if ("threshold" in pol) == ("alpha" in pol):
        raise ConfigurationError("[policy] give exactly one of threshold or alpha")
    threshold = float(pol["threshold"]) if "threshold" in pol else None
    alpha = float(pol["alpha"]) if "alpha" in pol else None
    if alpha is not None and not 0 < alpha < 1:
        raise ConfigurationError(f"[policy] alpha must be in (0, 1), got {alpha}")
    sampling_prob = pol.get("sampling_prob")
    if sampling_prob is not None:
        sampling_prob = float(sampling_prob)

    execution = raw.get("execution", {})
    _reject_unknown(execution, _SECTIONS["execution"], "execution")
    runs = int(execution.get("runs", 5000))
    cap = int(execution.get("cap", 1_000_000))
    seed = int(execution.get("seed", 0))
    workers = int(execution.get("workers", 1))
    if runs < 1 or cap < 1 or workers < 1:
        raise ConfigurationError("[execution] runs, cap, and workers must be positive")

    output = raw.get("output", {})
    _reject_unknown(output, _SECTIONS["output"], "output")
    csv_path = output.get("csv")
    experiment = output.get("experiment", "experiment")

    cfg = ExperimentConfig(
        n_sensors=n, change_point=change_point, affected=affected,
        pre=pre, post=post, mu=mu, beta=beta, h=h, d=d, sigma=sigma,
        rule=rule, threshold=threshold, alpha=alpha, sampling_prob=sampling_prob,
        runs=runs, cap=cap, seed=seed, workers=workers,
        csv_path=csv_path, experiment=str(experiment))
    cfg.build_scenario()  # fail fast: model-level validation before any simulation
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
