"""Command-line harness: ``spline-mppi {run,sweep,bench,genlog}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, TaskConfig, load_config, load_preset, preset_names
from .harness import (
    BENCH_COLUMNS,
    EPISODE_COLUMNS,
    SUMMARY_COLUMNS,
    SWEEP_PARAMETERS,
    bench,
    generate_synthetic_log,
    run_episode,
    summarize,
    sweep,
    write_rows,
)

log = logging.getLogger("spline_mppi")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2

SCHEMA_HELP = f"""\
CSV schemas (fixed column order; see csv_schemas.yaml in the package):
  episode rows : {', '.join(EPISODE_COLUMNS)}
  summary rows : {', '.join(SUMMARY_COLUMNS)}
  bench rows   : {', '.join(BENCH_COLUMNS)}
  trace rows   : t, <state labels>, u0..u(m-1), stage_cost
  measurements : timestamp_s, sensor_type, v0..v(W-1)

exit codes: 0 = all runs completed, 1 = configuration error, 2 = every seed diverged
"""


def _int_list(text: str) -> list[int]:
    """``"0,3,5"`` or ``"0-9"`` (inclusive range) or a mix of both."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1) if not part.startswith("-") else (part, "")
            out.extend(range(int(a), int(b) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("expected at least one integer")
    if any(v < 0 for v in out):
        raise argparse.ArgumentTypeError("values must be non-negative")
    return out


def _str_list(text: str) -> list[str]:
    out = [p.strip() for p in text.split(",") if p.strip()]
    if not out:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return out


def _load(args) -> TaskConfig:
    if args.config and args.task:
        raise ConfigError("", "pass either --config or --task, not both")
    cfg = load_config(args.config) if args.config else load_preset(args.task or "double_integrator")
    if getattr(args, "workers", None) is not None and isinstance(args.workers, int):
        cfg.workers = args.workers
    return cfg


def _common(p: argparse.ArgumentParser):
    src = p.add_argument_group("configuration")
    src.add_argument("--config", type=Path, help="YAML task config")
    src.add_argument("--task", help=f"built-in preset ({', '.join(preset_names())})")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-run progress")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spline-mppi",
        description="Spline-parameterized MPPI: closed-loop episodes, ablation sweeps, rollout benchmarks.",
        epilog=SCHEMA_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.RawDescriptionHelpFormatter

    run = sub.add_parser("run", help="run one episode per seed", epilog=SCHEMA_HELP, formatter_class=fmt)
    _common(run)
    run.add_argument("--seed", type=int, help="planner seed (overrides the config)")
    run.add_argument("--seeds", type=_int_list, help="several seeds, e.g. 0-9 or 1,4,7")
    run.add_argument("--workers", type=int, help="rollout worker threads")
    run.add_argument("--out", type=Path, help="episode CSV path")
    run.add_argument("--trace", action="store_true", help="also write the full state/control trace per seed")

    sw = sub.add_parser("sweep", help="sweep one planner hyperparameter", epilog=SCHEMA_HELP, formatter_class=fmt)
    _common(sw)
    sw.add_argument("--param", required=True, choices=sorted(SWEEP_PARAMETERS))
    sw.add_argument("--values", required=True, type=_str_list, help="comma-separated values")
    sw.add_argument("--seeds", type=_int_list, default=list(range(10)), help="default 0-9")
    sw.add_argument("--workers", type=int, help="rollout worker threads")
    sw.add_argument("--out", type=Path, help="episode CSV path")
    sw.add_argument("--summary-out", type=Path, help="per-value summary CSV path")

    be = sub.add_parser("bench", help="time batched rollouts", epilog=SCHEMA_HELP, formatter_class=fmt)
    _common(be)
    be.add_argument("--samples", type=_int_list, default=[30], help="sample counts, e.g. 10,30,50")
    be.add_argument("--workers", type=_int_list, default=[1, os.cpu_count() or 1], help="worker counts")
    be.add_argument("--iterations", type=int, default=100)
    be.add_argument("--out", type=Path, help="bench CSV path")

    gl = sub.add_parser("genlog", help="write a synthetic multirate sensor log", epilog=SCHEMA_HELP, formatter_class=fmt)
    _common(gl)
    gl.add_argument("--seed", type=int, default=0, help="sensor-noise seed")
    gl.add_argument("--duration", type=float, default=10.0, help="seconds of simulated motion")
    gl.add_argument("--out", type=Path, default=Path("synthetic_log"), help="output directory")
    return parser


def _print_rows(header, rows):
    print(",".join(header))
    for r in rows:
        print(",".join(str(r[c]) for c in header))


def _cmd_run(args) -> int:
    cfg = _load(args)
    seeds = args.seeds or [args.seed if args.seed is not None else cfg.planner.seed]
    rows, reports = [], []
    for s in seeds:
        trace = None
        if args.trace:
            stem = args.out.with_suffix("") if args.out else Path(f"{cfg.task}")
            trace = Path(f"{stem}_trace_seed{s}.csv")
        rep = run_episode(cfg, seed=s, trace_path=trace)
        reports.append(rep)
        rows.append(rep.to_row())
        log.info("seed %d: cost %.6g success %s config %s", s, rep.total_cost, rep.success, rep.config_hash)
    if args.out:
        write_rows(args.out, EPISODE_COLUMNS, [[r[c] for c in EPISODE_COLUMNS] for r in rows])
    _print_rows(EPISODE_COLUMNS, rows)
    return EXIT_DIVERGED if all(r.diverged for r in reports) else EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load(args)

    def progress(rep, label):
        log.info("%s=%s seed %d: cost %.6g success %s", args.param, label, rep.seed, rep.total_cost, rep.success)

    rows = sweep(cfg, args.param, args.values, args.seeds, out=args.out, progress=progress)
    summary = summarize(rows)
    if args.summary_out:
        write_rows(args.summary_out, SUMMARY_COLUMNS, [[s[c] for c in SUMMARY_COLUMNS] for s in summary])
    _print_rows(SUMMARY_COLUMNS, summary)
    return EXIT_DIVERGED if all(r["_report"].diverged for r in rows) else EXIT_OK


def _cmd_bench(args) -> int:
    cfg = _load(args)
    rows = bench(cfg, args.samples, args.workers, iterations=args.iterations)
    if args.out:
        write_rows(args.out, BENCH_COLUMNS, [[r[c] for c in BENCH_COLUMNS] for r in rows])
    _print_rows(BENCH_COLUMNS, rows)
    return EXIT_OK


def _cmd_genlog(args) -> int:
    cfg = _load(args)
    meas, truth = generate_synthetic_log(cfg, args.out, duration=args.duration, seed=args.seed)
    print(meas)
    print(truth)
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "bench": _cmd_bench, "genlog": _cmd_genlog}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
