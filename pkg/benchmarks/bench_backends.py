"""Benchmark the compiled kernel against the pure-Python fallback.

Usage: python benchmarks/bench_backends.py [--runs N] [--cap N]

Both backends produce bitwise-identical traces; this script reports the
wall-clock difference on a representative policy simulation and on the
ladder-cycle estimator.
"""

import argparse
import time

import decusum as dc


def time_policy(runs, cap):
    model = dc.SensorModel(pre=dc.Gaussian(0, 1), post=dc.Gaussian(0.5, 1),
                           mu=0.125, h=2.0, d_local=0.0)
    scen = dc.Scenario((model,) * 5, frozenset({1, 2}), 200)
    cfg = dc.RunConfig(scenario=scen, policy=dc.FusionPolicy("sum", 12.0),
                       cap=cap, seed=20_240_811)
    t0 = time.perf_counter()
    traces = dc.run_batch(cfg, runs)
    elapsed = time.perf_counter() - t0
    checksum = sum(t.stop_slot for t in traces)
    return elapsed, checksum


def time_ladder(cycles):
    model = dc.SensorModel(pre=dc.Gaussian(0, 1), post=dc.Gaussian(0.2, 1),
                           mu=0.02, h=10.0, d_local=0.0)
    t0 = time.perf_counter()
    rq = dc.renewal_quantities_mc(model, runs=cycles, seed=7)
    elapsed = time.perf_counter() - t0
    return elapsed, rq.mean_ladder_epoch


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--runs", type=int, default=400)
    parser.add_argument("--cap", type=int, default=20_000)
    parser.add_argument("--cycles", type=int, default=200_000)
    args = parser.parse_args()

    if "compiled" not in dc.available_backends():
        raise SystemExit("compiled backend not built; nothing to compare")

    rows = []
    checks = {}
    for backend in ("compiled", "python"):
        dc.set_backend(backend)
        t_pol, chk = time_policy(args.runs, args.cap)
        t_lad, mean_tau = time_ladder(args.cycles)
        rows.append((backend, t_pol, t_lad))
        checks[backend] = (chk, mean_tau)
    dc.set_backend("compiled")

    assert checks["compiled"] == checks["python"], "backends disagree"
    print(f"{'backend':<10} {'policy batch':>14} {'ladder cycles':>14}")
    for backend, t_pol, t_lad in rows:
        print(f"{backend:<10} {t_pol:>12.2f} s {t_lad:>12.2f} s")
    speed_pol = rows[1][1] / rows[0][1]
    speed_lad = rows[1][2] / rows[0][2]
    print(f"{'speedup':<10} {speed_pol:>12.1f} x {speed_lad:>12.1f} x")
    print("(identical results verified on both backends)")


if __name__ == "__main__":
    main()
