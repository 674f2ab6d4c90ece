"""Time batched rollouts against the 10 ms real-time budget.

Usage: python scripts/bench_realtime.py [--out bench.csv] [--iterations 100]
"""

from __future__ import annotations

import argparse
import os

from spline_mppi.config import load_preset
from spline_mppi.harness import BENCH_COLUMNS, bench, write_rows

BUDGET_MS = 10.0


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--tasks", default="double_integrator,pusher")
    p.add_argument("--samples", default="10,30,60,120")
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--out")
    args = p.parse_args(argv)
    samples = [int(s) for s in args.samples.split(",")]
    workers = sorted({1, os.cpu_count() or 1})
    over = False
    table = []
    for task in args.tasks.split(","):
        for row in bench(load_preset(task), samples, workers, iterations=args.iterations):
            flag = "" if row["median_ms"] < BUDGET_MS else "  over budget"
            over |= row["n_samples"] == 30 and bool(flag)
            print(f"{task:>18}  N={row['n_samples']:<4} workers={row['workers']:<3} median {row['median_ms']:7.3f} ms  p95 {row['p95_ms']:7.3f} ms{flag}")
            table.append([task, *(row[c] for c in BENCH_COLUMNS)])
    if args.out:
        write_rows(args.out, ["task", *BENCH_COLUMNS], table)
    return 1 if over else 0


if __name__ == "__main__":
    raise SystemExit(main())
