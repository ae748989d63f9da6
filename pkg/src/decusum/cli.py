"""Command-line front end.

Subcommands: metrics, sweep-m, calibrate, compare-fractional, verify.
Exit codes: 0 success, 1 validation error, 2 invariant failure,
3 runtime failure. CSV schema (stable, 9 significant digits, rows sorted
by m, policy, metric, sensor):

    experiment,policy,L,m,alpha,A,metric,sensor,value,half_width,runs,seed
"""

from __future__ import annotations

import argparse
import csv
import math
import sys

import numpy as np

from . import verify as verify_mod
from ._backend import backend_name
from .config import ExperimentConfig, load_config
from .errors import CalibrationError, ConfigurationError, DomainError
from .fusion import FusionPolicy, calibrate_threshold_mc, threshold_for_far
from .metrics import (MetricsReport, estimate_cadd, estimate_far,
                      estimate_pdc_ptc_direct, estimate_wadd_surrogate,
                      censored_fraction)
from .simulator import RunConfig, mix_seed, run_batch, sample_path_trace

CSV_COLUMNS = ("experiment", "policy", "L", "m", "alpha", "A", "metric",
               "sensor", "value", "half_width", "runs", "seed")

# threshold provenance, emitted as a metric row: 0 explicit, 1 formula, 2 calibrated
SOURCE_EXPLICIT, SOURCE_FORMULA, SOURCE_CALIBRATED = 0, 1, 2


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, float):
        return format(x, ".9g")
    return str(x)


def _sort_key(row: dict):
    sensor = row["sensor"]
    return (row["m"], row["policy"], row["metric"], -1 if sensor == "" else int(sensor))


def emit_csv(path: str, rows: list) -> None:
    rows = sorted(rows, key=_sort_key)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in CSV_COLUMNS])


def _row(cfg: ExperimentConfig, policy: str, m: int, alpha, a: float, metric: str,
         sensor, value: float, half_width: float, runs: int, seed: int) -> dict:
    return {"experiment": cfg.experiment, "policy": policy, "L": cfg.n_sensors,
            "m": m, "alpha": alpha, "A": a, "metric": metric, "sensor": sensor,
            "value": value, "half_width": half_width, "runs": runs, "seed": seed}


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    from dataclasses import replace

    updates = {}
    for name in ("runs", "cap", "seed", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            updates[name] = value
    return replace(cfg, **updates) if updates else cfg


def _resolve_threshold(cfg: ExperimentConfig, rule: str, alpha, use_formula: bool,
                       seed_tag: int, m=None):
    """Threshold and its provenance code for one policy."""
    if cfg.threshold is not None and alpha is None:
        return cfg.threshold, SOURCE_EXPLICIT
    scenario_pre = cfg.build_scenario(change_point=math.inf, m=m)
    if use_formula:
        if rule == "max":
            return threshold_for_far("max", alpha, cfg.n_sensors), SOURCE_FORMULA
        if rule in ("sum", "fractional_sum"):
            return threshold_for_far("sum", alpha, cfg.n_sensors), SOURCE_FORMULA
        if rule == "oracle_cusum":
            return abs(math.log(alpha)), SOURCE_FORMULA
        raise ConfigurationError("no threshold formula for the all rule; use calibration")
    cal_runs = min(cfg.runs, 2000)
    cal_cap = min(cfg.cap, int(math.ceil(100.0 / alpha)))
    a = calibrate_threshold_mc(scenario_pre, rule, alpha, runs=cal_runs, cap=cal_cap,
                               seed=mix_seed(cfg.seed, seed_tag), workers=cfg.workers,
                               sampling_prob=cfg.sampling_prob if rule == "fractional_sum" else None)
    return a, SOURCE_CALIBRATED


def _far_rows(cfg, policy: FusionPolicy, m: int, alpha, seed_tag: int, scenario_pre):
    run_cfg = RunConfig(scenario=scenario_pre, policy=policy, cap=cfg.cap,
                        seed=mix_seed(cfg.seed, seed_tag))
    traces = run_batch(run_cfg, cfg.runs, workers=cfg.workers)
    far = estimate_far(traces)
    rows = [
        _row(cfg, policy.rule, m, alpha, policy.threshold_a, "far", "",
             far.value, far.half_width, cfg.runs, cfg.seed),
        _row(cfg, policy.rule, m, alpha, policy.threshold_a, "censored_fraction", "",
             censored_fraction(traces), 0.0, cfg.runs, cfg.seed),
    ]
    return rows, traces


def _report_rows(cfg: ExperimentConfig, report: MetricsReport, m: int, alpha,
                 a: float) -> list:
    """Serialize a MetricsReport into the CSV schema."""
    rows = []

    def add(metric, sensor, value, half_width=0.0):
        rows.append(_row(cfg, cfg.rule, m, alpha, a, metric, sensor, value,
                         half_width, cfg.runs, cfg.seed))

    if report.far is not None:
        add("far", "", report.far.value, report.far.half_width)
    add("censored_fraction", "", report.censored_fraction)
    if report.cadd is not None:
        add("cadd", "", report.cadd.value, report.cadd.half_width)
        add("cadd_gamma", "", float(report.cadd_gamma))
    if report.wadd_surrogate is not None:
        add("wadd_surrogate", "", report.wadd_surrogate.value,
            report.wadd_surrogate.half_width)
    for l, (p, t) in enumerate(zip(report.pdc, report.ptc), start=1):
        add("pdc", l, p.value, p.half_width)
        add("ptc", l, t.value, t.half_width)
    return rows


def cmd_metrics(cfg: ExperimentConfig, args) -> int:
    m = len(cfg.affected)
    alpha = cfg.alpha
    a, source = _resolve_threshold(cfg, cfg.rule, alpha, args.formula_thresholds, 7)
    policy = FusionPolicy(cfg.rule, a, cfg.sampling_prob if cfg.rule == "fractional_sum" else None)
    scenario_pre = cfg.build_scenario(change_point=math.inf)
    run_cfg = RunConfig(scenario=scenario_pre, policy=policy, cap=cfg.cap,
                        seed=mix_seed(cfg.seed, 1))
    traces = run_batch(run_cfg, cfg.runs, workers=cfg.workers)
    pdc, ptc = estimate_pdc_ptc_direct(traces)
    for l, t in enumerate(ptc, start=1):
        if cfg.sigma is not None and t.value > cfg.sigma[l - 1] + 3 * t.half_width / 1.96:
            print(f"warning: sensor {l} estimated PTC {t.value:.4f} exceeds "
                  f"target sigma={cfg.sigma[l - 1]}", file=sys.stderr)

    cadd = wadd = None
    cadd_gamma = None
    scenario = cfg.build_scenario()
    if scenario.affected:
        grid = None
        if cfg.change_point != math.inf:
            from .metrics import default_gamma_grid
            grid = sorted(set(default_gamma_grid(scenario, seed=cfg.seed)
                              + [int(cfg.change_point)]))
        res = estimate_cadd(scenario, policy, gamma_grid=grid, runs=cfg.runs,
                            cap=cfg.cap, seed=mix_seed(cfg.seed, 2), workers=cfg.workers)
        cadd, cadd_gamma = res.estimate, res.gamma
        if all(scenario.sensors[k - 1].h != math.inf for k in scenario.affected):
            wadd = estimate_wadd_surrogate(scenario, policy, runs=cfg.runs, cap=cfg.cap,
                                           seed=mix_seed(cfg.seed, 3),
                                           workers=cfg.workers).estimate
        else:
            print("note: wadd_surrogate skipped (h=inf on an affected sensor)", file=sys.stderr)

    report = MetricsReport(far=estimate_far(traces), cadd=cadd, cadd_gamma=cadd_gamma,
                           wadd_surrogate=wadd, pdc=tuple(pdc), ptc=tuple(ptc),
                           censored_fraction=censored_fraction(traces))
    rows = _report_rows(cfg, report, m, alpha, a)
    rows.append(_row(cfg, cfg.rule, m, alpha, a, "threshold_source", "",
                     float(source), 0.0, cfg.runs, cfg.seed))

    out = args.out or cfg.csv_path
    if not out:
        raise ConfigurationError("no CSV output path: set [output] csv or pass --out")
    emit_csv(out, rows)
    print(f"wrote {len(rows)} rows to {out} (backend: {backend_name()})")

    if args.trace_out:
        trace_scenario = scenario if scenario.affected else cfg.build_scenario(
            change_point=max(2, args.trace_len // 2),
            m=None if cfg.affected else cfg.n_sensors)
        trace = sample_path_trace(trace_scenario, sensor=1, length=args.trace_len,
                                  seed=mix_seed(cfg.seed, 4))
        with open(args.trace_out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["slot", "sampled", "observation", "decusum", "cusum"])
            for i in range(len(trace["slot"])):
                writer.writerow([trace["slot"][i], trace["sampled"][i],
                                 _fmt(float(trace["observation"][i])),
                                 _fmt(float(trace["decusum"][i])),
                                 _fmt(float(trace["cusum"][i]))])
        print(f"wrote sample-path trace to {args.trace_out}")
    return 0


def cmd_sweep_m(cfg: ExperimentConfig, args) -> int:
    if cfg.alpha is None:
        raise ConfigurationError("sweep-m requires an alpha target (matched-FAR comparison)")
    sensors = cfg.build_sensors()
    if any(s != sensors[0] for s in sensors):
        raise ConfigurationError("sweep-m requires identical sensors (exchangeable sweep)")
    m_values = sorted(set(int(x) for x in args.m.split(",")))
    for m in m_values:
        if not 1 <= m <= cfg.n_sensors:
            raise ConfigurationError(f"m={m} outside 1..{cfg.n_sensors}")
    alpha = cfg.alpha
    rows = []
    for rule in ("max", "sum", "oracle_cusum"):
        per_m_threshold = rule == "oracle_cusum" and not args.formula_thresholds
        a = None
        if not per_m_threshold:
            a, _src = _resolve_threshold(cfg, rule, alpha, args.formula_thresholds, 11)
        for m in m_values:
            if per_m_threshold:
                a, _src = _resolve_threshold(cfg, rule, alpha, False, 11, m=m)
            policy = FusionPolicy(rule, a)
            scenario_pre = cfg.build_scenario(change_point=math.inf, m=m)
            far_rows, _ = _far_rows(cfg, policy, m, alpha, 13, scenario_pre)
            rows.extend(far_rows)
            scenario = cfg.build_scenario(m=m, change_point=1)
            cadd = estimate_cadd(scenario, policy, runs=cfg.runs, cap=cfg.cap,
                                 seed=mix_seed(cfg.seed, 17), workers=cfg.workers)
            rows.append(_row(cfg, rule, m, alpha, a, "cadd", "", cadd.estimate.value,
                             cadd.estimate.half_width, cfg.runs, cfg.seed))
            rows.append(_row(cfg, rule, m, alpha, a, "cadd_gamma", "", float(cadd.gamma),
                             0.0, cfg.runs, cfg.seed))
            print(f"m={m} {rule}: cadd={cadd.estimate.value:.3f} "
                  f"+/-{cadd.estimate.half_width:.3f} at A={a:.6g}")
    out = args.out or cfg.csv_path
    if not out:
        raise ConfigurationError("no CSV output path: set [output] csv or pass --out")
    emit_csv(out, rows)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_calibrate(cfg: ExperimentConfig, args) -> int:
    if cfg.alpha is None:
        raise ConfigurationError("calibrate requires an alpha target in [policy]")
    a, source = _resolve_threshold(cfg, cfg.rule, cfg.alpha, args.formula_thresholds, 7)
    kind = "formula" if source == SOURCE_FORMULA else "calibrated"
    print(f"{kind} threshold for rule={cfg.rule} alpha={cfg.alpha}: A={a:.9g}")
    out = args.out or cfg.csv_path
    if out:
        emit_csv(out, [_row(cfg, cfg.rule, len(cfg.affected), cfg.alpha, a, "threshold",
                            "", a, 0.0, cfg.runs, cfg.seed)])
        print(f"wrote threshold row to {out}")
    return 0


def cmd_compare_fractional(cfg: ExperimentConfig, args) -> int:
    if cfg.rule != "sum":
        raise ConfigurationError("compare-fractional contrasts the sum rule with "
                                 "fractional sampling; set [policy] rule='sum'")
    far_grid = [float(x) for x in args.far_grid.split(",")]
    if any(not 0 < a < 1 for a in far_grid):
        raise ConfigurationError(f"FAR grid values must be in (0, 1): {far_grid}")
    p_sample = cfg.sampling_prob
    if p_sample is None:
        p_sample = cfg.beta[0] if cfg.beta is not None else 0.5
    from dataclasses import replace

    rows = []
    m = len(cfg.affected)
    for alpha in far_grid:
        for rule, prob in (("sum", None), ("fractional_sum", p_sample)):
            cfg_a = replace(cfg, alpha=alpha, threshold=None, sampling_prob=prob)
            a, _src = _resolve_threshold(cfg_a, rule, alpha, args.formula_thresholds, 19)
            policy = FusionPolicy(rule, a, prob)
            scenario_pre = cfg_a.build_scenario(change_point=math.inf)
            far_rows, _ = _far_rows(cfg_a, policy, m, alpha, 23, scenario_pre)
            rows.extend(far_rows)
            scenario = cfg_a.build_scenario()
            cadd = estimate_cadd(scenario, policy, runs=cfg.runs, cap=cfg.cap,
                                 seed=mix_seed(cfg.seed, 29), workers=cfg.workers)
            rows.append(_row(cfg_a, rule, m, alpha, a, "cadd", "", cadd.estimate.value,
                             cadd.estimate.half_width, cfg.runs, cfg.seed))
            print(f"alpha={alpha:g} {rule}: cadd={cadd.estimate.value:.3f} "
                  f"+/-{cadd.estimate.half_width:.3f} at A={a:.6g}")
    out = args.out or cfg.csv_path
    if not out:
        raise ConfigurationError("no CSV output path: set [output] csv or pass --out")
    emit_csv(out, rows)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def cmd_verify(args) -> int:
    model = None
    if args.config:
        cfg = load_config(args.config)
        model = cfg.build_sensors()[0]
    checks = verify_mod.build_checks(model=model, runs=args.runs or 4000,
                                     seed=args.seed if args.seed is not None else 7)
    if args.list:
        for name, _fn in checks:
            print(name)
        return 0
    failures = 0
    for name, fn in checks:
        ok, detail = fn()
        status = "PASS" if ok else "FAIL"
        if ok is None:
            status = "SKIP"
        else:
            failures += 0 if ok else 1
        print(f"{status} {name}: {detail}")
    return 2 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="decusum",
        description="Data-efficient quickest detection in sensor networks: "
                    "simulation, calibration, and verification")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="TOML experiment config")
        p.add_argument("--out", help="CSV output path (overrides [output] csv)")
        p.add_argument("--seed", type=int, help="override [execution] seed")
        p.add_argument("--runs", type=int, help="override [execution] runs")
        p.add_argument("--cap", type=int, help="override [execution] cap")
        p.add_argument("--workers", type=int, help="override [execution] workers")
        p.add_argument("--formula-thresholds", action="store_true",
                       help="use the conservative closed-form thresholds instead of "
                            "Monte Carlo calibration")

    p = sub.add_parser("metrics", help="estimate FAR, CADD, WADD surrogate, PDC, PTC")
    common(p)
    p.add_argument("--trace-out", help="also dump a single-sensor sample-path trace CSV")
    p.add_argument("--trace-len", type=int, default=400, help="trace length in slots")

    p = sub.add_parser("sweep-m", help="CADD vs number of outlying streams, per policy")
    common(p)
    p.add_argument("--m", required=True, help="comma-separated outlying-stream counts")

    p = sub.add_parser("calibrate", help="resolve a fusion threshold for an alpha target")
    common(p)

    p = sub.add_parser("compare-fractional", help="sum rule vs fractional sampling at matched FAR")
    common(p)
    p.add_argument("--far-grid", default="0.001,0.00316,0.01",
                   help="comma-separated FAR targets")

    p = sub.add_parser("verify", help="run invariant and oracle cross-checks")
    p.add_argument("--config", help="optional config supplying a discrete model")
    p.add_argument("--list", action="store_true", help="list checks without running")
    p.add_argument("--runs", type=int, help="Monte Carlo scale for the checks")
    p.add_argument("--seed", type=int, help="seed for the checks")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "metrics":
            return cmd_metrics(cfg, args)
        if args.command == "sweep-m":
            return cmd_sweep_m(cfg, args)
        if args.command == "calibrate":
            return cmd_calibrate(cfg, args)
        if args.command == "compare-fractional":
            return cmd_compare_fractional(cfg, args)
        raise RuntimeError(f"unhandled command {args.command}")
    except (ConfigurationError, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CalibrationError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
