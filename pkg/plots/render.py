#!/usr/bin/env python3
"""Render metric CSVs from the decusum CLI into comparison figures.

Usage:
    python render.py --csv <path> --kind <sweep_m|cadd_vs_far|sample_path> --out <png>

Kinds:
    sweep_m      detection delay vs number of outlying streams, one
                 error-bar series per policy (CSV from `decusum sweep-m`)
    cadd_vs_far  detection delay vs the FAR target on a log x axis, one
                 series per policy (CSV from `decusum compare-fractional`)
    sample_path  overlay of the data-efficient statistic and the CuSum on
                 a shared observation sequence (CSV from
                 `decusum metrics --trace-out`)

Rendering is read-only over the CSVs; nothing is recomputed. Exits
nonzero on a schema mismatch (with a column diff) or an empty file.
"""

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

METRICS_COLUMNS = ["experiment", "policy", "L", "m", "alpha", "A", "metric",
                   "sensor", "value", "half_width", "runs", "seed"]
TRACE_COLUMNS = ["slot", "sampled", "observation", "decusum", "cusum"]

POLICY_LABELS = {
    "max": "censored max fusion",
    "sum": "censored sum fusion",
    "oracle_cusum": "oracle CuSum",
    "fractional_sum": "fractional sampling",
}


class SchemaError(Exception):
    pass


def load_csv(path: str, expected_columns) -> pd.DataFrame:
    frame = pd.read_csv(path)
    if list(frame.columns) != expected_columns:
        missing = [c for c in expected_columns if c not in frame.columns]
        extra = [c for c in frame.columns if c not in expected_columns]
        raise SchemaError(f"CSV schema mismatch: missing {missing}, unexpected {extra}")
    if frame.empty:
        raise SchemaError("no rows")
    return frame


def _cadd_series(frame: pd.DataFrame, x_column: str, ax) -> int:
    cadd = frame[frame["metric"] == "cadd"]
    if cadd.empty:
        raise SchemaError("no rows with metric=cadd")
    n_series = 0
    for policy, group in cadd.groupby("policy"):
        group = group.sort_values(x_column)
        ax.errorbar(group[x_column], group["value"], yerr=group["half_width"],
                    marker="o", capsize=3, label=POLICY_LABELS.get(policy, policy))
        n_series += 1
    return n_series


def render_sweep_m(frame: pd.DataFrame, out: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    _cadd_series(frame, "m", ax)
    ax.set_xlabel("number of outlying streams m")
    ax.set_ylabel("conditional average detection delay")
    ax.set_title("Detection delay vs outlying-stream count (matched FAR)")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=150)


def render_cadd_vs_far(frame: pd.DataFrame, out: str) -> None:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    _cadd_series(frame, "alpha", ax)
    ax.set_xscale("log")
    ax.set_xlabel("false alarm rate target")
    ax.set_ylabel("conditional average detection delay")
    ax.set_title("Detection delay vs FAR")
    ax.legend()
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(out, dpi=150)


def render_sample_path(frame: pd.DataFrame, out: str) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(frame["slot"], frame["cusum"], label="CuSum statistic", lw=1.4)
    ax.plot(frame["slot"], frame["decusum"], label="data-efficient statistic", lw=1.4)
    skipped = frame[frame["sampled"] == 0]
    if not skipped.empty:
        ax.plot(skipped["slot"], skipped["decusum"], ".", ms=3, color="grey",
                label="skipped slots")
    ax.axhline(0.0, color="black", lw=0.6)
    ax.set_xlabel("slot")
    ax.set_ylabel("statistic")
    ax.set_title("Statistic sample paths on shared observations")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out, dpi=150)


RENDERERS = {
    "sweep_m": (METRICS_COLUMNS, render_sweep_m),
    "cadd_vs_far": (METRICS_COLUMNS, render_cadd_vs_far),
    "sample_path": (TRACE_COLUMNS, render_sample_path),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="render decusum CSV outputs")
    parser.add_argument("--csv", required=True, help="input CSV path")
    parser.add_argument("--kind", required=True, choices=sorted(RENDERERS))
    parser.add_argument("--out", required=True, help="output image path")
    args = parser.parse_args(argv)
    expected, renderer = RENDERERS[args.kind]
    try:
        frame = load_csv(args.csv, expected)
        renderer(frame, args.out)
    except (SchemaError, FileNotFoundError, pd.errors.EmptyDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
