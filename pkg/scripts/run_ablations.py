"""Run the planner ablation sweeps and write per-episode and summary CSVs.

Usage: python scripts/run_ablations.py [--out results] [--seeds 0-9]
"""

from __future__ import annotations

import argparse
from pathlib import Path

from spline_mppi.cli import _int_list
from spline_mppi.config import load_preset
from spline_mppi.harness import SUMMARY_COLUMNS, summarize, sweep, write_rows

# (task preset, swept parameter, values)
ABLATIONS = [
    ("pusher", "representation", ["Cubic", "Linear", "ZerothOrder", "Direct"]),
    ("cartpole", "temperature", [0.005, 0.02, 0.1, 0.3, 1.0]),
    ("cartpole", "num_samples", [5, 10, 20, 40, 80, 160]),
    ("cartpole", "horizon", [5, 20, 40, 80, 100]),
    ("cartpole", "control_frequency", [25, 50, 100]),
]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--seeds", type=_int_list, default=list(range(10)))
    p.add_argument("--only", help="run only the sweeps of this parameter")
    args = p.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    for task, param, values in ABLATIONS:
        if args.only and param != args.only:
            continue
        rows = sweep(load_preset(task), param, values, seeds=args.seeds, out=args.out / f"{task}_{param}.csv")
        summary = summarize(rows)
        write_rows(args.out / f"{task}_{param}_summary.csv", SUMMARY_COLUMNS, [[s[c] for c in SUMMARY_COLUMNS] for s in summary])
        print(f"{task} / {param}")
        for s in summary:
            print(f"  {s['param_value']:>12}  mean {s['mean_cost']:12.3f}  std {s['std_cost']:10.3f}  success {s['success_rate']:.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
