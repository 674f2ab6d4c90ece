from __future__ import annotations

import csv
import subprocess
import sys

import pytest
import yaml

from spline_mppi.cli import build_parser, main
from spline_mppi.config import load_preset, to_dict
from spline_mppi.harness import BENCH_COLUMNS, EPISODE_COLUMNS, SUMMARY_COLUMNS


def write_cfg(tmp_path, name="cfg.yaml", **episode):
    data = to_dict(load_preset("double_integrator"))
    data["episode"].update(duration=0.3, **episode)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return path


def read(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_help_documents_schemas_and_exit_codes(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--help"])
    assert info.value.code == 0
    text = capsys.readouterr().out
    for col in (*EPISODE_COLUMNS, *SUMMARY_COLUMNS, *BENCH_COLUMNS, "timestamp_s"):
        assert col in text
    assert "exit codes" in text


def test_subcommand_help_mentions_flags(capsys):
    with pytest.raises(SystemExit):
        main(["sweep", "--help"])
    text = capsys.readouterr().out
    for flag in ("--config", "--param", "--values", "--seeds", "--out", "--workers"):
        assert flag in text


def test_run_writes_episode_rows_and_traces(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "episodes.csv"
    assert main(["run", "--config", str(cfg), "--seeds", "0-1", "--out", str(out), "--trace"]) == 0
    rows = read(out)
    assert rows[0] == list(EPISODE_COLUMNS) and [r[0] for r in rows[1:]] == ["0", "1"]
    assert (tmp_path / "episodes_trace_seed0.csv").exists() and (tmp_path / "episodes_trace_seed1.csv").exists()
    assert capsys.readouterr().out.splitlines()[0] == ",".join(EPISODE_COLUMNS)


def test_run_is_repeatable(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    main(["run", "--config", str(cfg), "--seed", "3"])
    first = capsys.readouterr().out.splitlines()[1].split(",")
    main(["run", "--config", str(cfg), "--seed", "3", "--workers", "2"])
    second = capsys.readouterr().out.splitlines()[1].split(",")
    assert first[:7] == second[:7]  # everything but wall time


def test_preset_by_task_name(capsys):
    assert main(["run", "--task", "hopper", "--seed", "0"]) == 0
    assert "hopper" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["run", "--task", "nope"],
        ["run", "--config", "/nonexistent/cfg.yaml"],
        ["sweep", "--task", "double_integrator", "--param", "temperature", "--values", "-1", "--seeds", "0"],
    ],
)
def test_config_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "config error" in capsys.readouterr().err


def test_unknown_key_exit_1_names_path(tmp_path, capsys):
    path = tmp_path / "bad.yaml"
    data = to_dict(load_preset("double_integrator"))
    data["planner"]["num_sampels"] = 3
    path.write_text(yaml.safe_dump(data))
    assert main(["run", "--config", str(path)]) == 1
    assert "planner.num_sampels" in capsys.readouterr().err


def test_config_and_task_are_exclusive(tmp_path):
    assert main(["run", "--task", "hopper", "--config", str(write_cfg(tmp_path))]) == 1


def test_all_seeds_diverged_exit_2(tmp_path):
    data = to_dict(load_preset("double_integrator"))
    data["env"]["params"]["mass"] = 1e-308
    data["episode"]["duration"] = 0.1
    path = tmp_path / "boom.yaml"
    path.write_text(yaml.safe_dump(data))
    assert main(["run", "--config", str(path), "--seeds", "0,1"]) == 2
    assert main(["sweep", "--config", str(path), "--param", "temperature", "--values", "0.1", "--seeds", "0"]) == 2


def test_sweep_writes_rows_and_summary(tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out, summary = tmp_path / "sweep.csv", tmp_path / "summary.csv"
    code = main([
        "sweep", "--config", str(cfg), "--param", "representation", "--values", "Linear,Cubic",
        "--seeds", "0,1", "--out", str(out), "--summary-out", str(summary),
    ])
    assert code == 0
    rows = read(out)
    assert len(rows) == 5 and {r[3] for r in rows[1:]} == {"Linear", "Cubic"}
    s = read(summary)
    assert s[0] == list(SUMMARY_COLUMNS) and [r[2] for r in s[1:]] == ["Linear", "Cubic"]


def test_bad_sweep_param_is_a_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["sweep", "--task", "double_integrator", "--param", "gamma", "--values", "1"])
    assert info.value.code == 2  # argparse usage error


def test_bench_writes_rows(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--task", "double_integrator", "--samples", "5,10", "--workers", "1", "--iterations", "3", "--out", str(out)]) == 0
    rows = read(out)
    assert rows[0] == list(BENCH_COLUMNS) and len(rows) == 3


def test_genlog_writes_both_files(tmp_path):
    assert main(["genlog", "--task", "double_integrator", "--duration", "0.5", "--out", str(tmp_path / "log")]) == 0
    meas = read(tmp_path / "log" / "measurements.csv")
    truth = read(tmp_path / "log" / "ground_truth.csv")
    assert meas[0][:2] == ["timestamp_s", "sensor_type"] and truth[0][0] == "timestamp_s"
    assert len(truth) == 1 + 251


def test_seed_list_parsing():
    p = build_parser()
    assert p.parse_args(["run", "--seeds", "0-2,7"]).seeds == [0, 1, 2, 7]
    with pytest.raises(SystemExit):
        p.parse_args(["run", "--seeds", ""])


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "spline_mppi", "--help"], capture_output=True, text=True, check=True)
    assert "run" in out.stdout and "sweep" in out.stdout
