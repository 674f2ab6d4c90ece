"""Closed-loop episodes, hyperparameter sweeps, rollout benchmarks and synthetic sensor logs."""

from __future__ import annotations

import csv
import dataclasses
import math
import statistics
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import ConfigError, TaskConfig, config_hash
from .costs import BoxPushCost, CostSpec, step_cost
from .envs import DoubleIntegrator, EnvModel, Hopper
from .estimator import (
    EkfState,
    Encoders,
    FilterParams,
    Imu,
    Layout,
    Measurement,
    Pose,
    initial_state,
    run_multirate,
    write_measurement_log,
)
from .mppi import MPPIPlanner
from .rollout import DIVERGENCE_COST, RolloutEngine
from .spline import Order, evaluate

__all__ = [
    "EPISODE_COLUMNS",
    "BENCH_COLUMNS",
    "SWEEP_PARAMETERS",
    "EpisodeReport",
    "EstimatorBridge",
    "estimator_bridge",
    "run_episode",
    "apply_override",
    "sweep",
    "summarize",
    "bench",
    "simulate_measurements",
    "generate_synthetic_log",
    "write_rows",
]

EPISODE_COLUMNS = ("seed", "task", "param_name", "param_value", "total_cost", "success", "steps", "mean_plan_wall_ms")
SUMMARY_COLUMNS = ("task", "param_name", "param_value", "runs", "mean_cost", "std_cost", "success_rate")
BENCH_COLUMNS = ("n_samples", "workers", "median_ms", "p95_ms")


@dataclass(frozen=True)
class EpisodeReport:
    total_cost: float
    success: bool
    steps: int
    mean_plan_wall_ms: float
    seed: int
    config_hash: str
    task: str = ""
    diverged: bool = False
    final_state: tuple = ()

    def to_row(self, param_name: str = "", param_value="") -> dict:
        return {
            "seed": self.seed,
            "task": self.task,
            "param_name": param_name,
            "param_value": param_value,
            "total_cost": float(self.total_cost),
            "success": int(self.success),
            "steps": self.steps,
            "mean_plan_wall_ms": round(float(self.mean_plan_wall_ms), 4),
        }


# --- estimator coupling ----------------------------------------------------------


@dataclass(frozen=True)
class EstimatorBridge:
    """Maps an environment state to and from the filter's state layout."""

    layout: Layout
    to_filter: Callable[[np.ndarray], np.ndarray]
    from_filter: Callable[[np.ndarray], np.ndarray]
    gravity: tuple = ()


def _hopper_to_filter(x):
    zb, zf, vb, vf = x
    return np.array([zb, vb, zb - zf, vb - vf])


def _hopper_from_filter(s):
    zb, vb, leg, legv = s
    return np.array([zb, zb - leg, vb, vb - legv])


def estimator_bridge(env: EnvModel) -> EstimatorBridge:
    if isinstance(env, DoubleIntegrator):
        return EstimatorBridge(Layout(2, 0, 0), np.array, np.array)
    if isinstance(env, Hopper):
        return EstimatorBridge(Layout(1, 0, 1), _hopper_to_filter, _hopper_from_filter, gravity=(-env.gravity,))
    raise ConfigError("estimator.enabled", f"no estimator state mapping for environment {env.name!r}")


def _filter_params(cfg: TaskConfig, bridge: EstimatorBridge) -> FilterParams:
    return FilterParams(layout=bridge.layout, accel_random_walk=cfg.estimator.accel_random_walk, gravity=bridge.gravity)


def _var(sigma: float) -> float:
    # zero-noise logs still need a positive definite covariance
    return max(sigma * sigma, 1e-12)


class _SensorSuite:
    """Samples noisy multirate measurements from fine-grained ground truth."""

    def __init__(self, cfg: TaskConfig, bridge: EstimatorBridge, fine_dt: float, rng: np.random.Generator):
        e = cfg.estimator
        self.e, self.bridge, self.h, self.rng = e, bridge, fine_dt, rng
        self.pose_every = self._period(e.pose_rate, "pose_rate")
        self.imu_every = self._period(e.imu_rate, "imu_rate")
        self.enc_every = self._period(e.encoder_rate, "encoder_rate")
        L = bridge.layout
        self.pose_cov = np.r_[[_var(e.pose_noise)] * L.pos_dim, [_var(e.attitude_noise)] * L.att_dim]
        self.acc_cov = _var(e.imu_noise)
        self.gyro_cov = _var(e.gyro_noise)
        self.enc_cov = np.r_[[_var(e.encoder_noise)] * L.joint_dim, [_var(e.encoder_rate_noise)] * L.joint_dim]

    def _period(self, rate: float, name: str) -> int:
        k = 1.0 / (rate * self.h)
        if rate <= 0 or k < 1 - 1e-9 or abs(k - round(k)) > 1e-6:
            raise ConfigError(f"estimator.{name}", f"{rate} Hz must divide the {1 / self.h:g} Hz simulation tick")
        return int(round(k))

    def _noise(self, sigma: float, n: int) -> np.ndarray:
        return sigma * self.rng.standard_normal(n) if n else np.zeros(0)

    def imu(self, k: int, t: float, s_now: np.ndarray, s_next: np.ndarray) -> list[Measurement]:
        """IMU at tick ``k``: the acceleration applied over the coming tick."""
        if k % self.imu_every:
            return []
        L, e = self.bridge.layout, self.e
        acc = (s_next[L.vel] - s_now[L.vel]) / self.h - np.asarray(self.bridge.gravity or np.zeros(L.pos_dim))
        gyro = s_now[L.angvel]
        return [
            Imu(
                t,
                acc + self._noise(e.imu_noise, L.pos_dim),
                gyro + self._noise(e.gyro_noise, L.att_dim),
                self.acc_cov,
                self.gyro_cov,
            )
        ]

    def state_sensors(self, k: int, t: float, s: np.ndarray) -> list[Measurement]:
        """Pose and encoder readings of the state at tick ``k``."""
        L, e = self.bridge.layout, self.e
        out: list[Measurement] = []
        if k % self.pose_every == 0:
            out.append(
                Pose(
                    t,
                    s[L.pos] + self._noise(e.pose_noise, L.pos_dim),
                    s[L.att] + self._noise(e.attitude_noise, L.att_dim),
                    self.pose_cov,
                )
            )
        if L.joint_dim and k % self.enc_every == 0:
            out.append(
                Encoders(
                    t,
                    s[L.joints] + self._noise(e.encoder_noise, L.joint_dim),
                    s[L.jointvel] + self._noise(e.encoder_rate_noise, L.joint_dim),
                    self.enc_cov,
                )
            )
        return out


def _fine_env(env: EnvModel) -> EnvModel:
    """Same physics, one substep per call, so sensors can sample every substep."""
    return dataclasses.replace(env, sim_dt=env.sim_dt / env.substeps, substeps=1)


# --- episodes ------------------------------------------------------------------------


def _success_tracker(cfg: TaskConfig, cost: CostSpec, dt: float):
    s = cfg.episode.success
    hold_steps = max(1, int(math.ceil(s.hold_time / dt - 1e-9))) if s.hold_time > 0 else 1
    if s.kind == "state":
        idx = list(s.indices)
        target = np.asarray(s.target if s.target is not None else cost.tracking.x_ref[idx], dtype=float)

        def inside(x):
            return float(np.linalg.norm(x[idx] - target)) < s.tolerance

    elif s.kind == "box":
        box_idx = list(cost.box_index)

        def inside(x):
            return float(np.linalg.norm(x[box_idx] - cost.box.box_target)) < cost.box.goal_tolerance

    else:
        return None, hold_steps
    return inside, hold_steps


def _planning_cost(base: CostSpec, x_est: np.ndarray, cfg: TaskConfig) -> CostSpec:
    if isinstance(base, BoxPushCost) and cfg.cost.robot_goal_at_box:
        return base.with_robot_goal(x_est[list(base.box_index)])
    return base


def _trace_header(env: EnvModel) -> list[str]:
    labels = list(env.state_labels) or [f"x{i}" for i in range(env.state_dim)]
    return ["t"] + labels + [f"u{i}" for i in range(env.control_dim)] + ["stage_cost"]


def run_episode(cfg: TaskConfig, seed: int | None = None, trace_path: str | Path | None = None, workers: int | None = None) -> EpisodeReport:
    """Run one receding-horizon episode in simulation time.

    The planner replans every ``replan_interval`` steps; between plans the
    executed control follows the latest mean spline. With the estimator
    enabled, the planner starts from the filter estimate, not the true state.
    """
    if seed is not None:
        cfg = dataclasses.replace(cfg, planner=dataclasses.replace(cfg.planner, seed=int(seed)))
    cfg.validate()
    env = cfg.build_env()
    base_cost = cfg.build_cost(env)
    pc = cfg.planner
    dt = pc.sim_dt
    k_replan = pc.replan_interval
    n_steps = int(round(cfg.episode.duration / dt))
    x = np.asarray(cfg.episode.initial_state if cfg.episode.initial_state is not None else env.initial_state(), dtype=float)

    inside, hold_steps = _success_tracker(cfg, base_cost, dt)
    streak, success = 0, False

    est = None
    if cfg.estimator.enabled:
        bridge = estimator_bridge(env)
        fparams = _filter_params(cfg, bridge)
        fine = _fine_env(env)
        rng = np.random.default_rng([cfg.estimator.noise_seed, pc.seed])
        sensors = _SensorSuite(cfg, bridge, fine.sim_dt, rng)
        ekf = initial_state(bridge.layout, bridge.to_filter(x), std=0.01)
        est = (bridge, fparams, fine, sensors)
        fine_k = 0

    planner = MPPIPlanner(pc, env, base_cost, workers=workers or cfg.workers)
    trace_rows = [] if trace_path is not None else None
    total, steps, diverged = 0.0, 0, False
    plan_ms: list[float] = []
    mean = None
    plan_cost = base_cost
    plan_t = 0.0
    x_est = x.copy()
    try:
        for i in range(n_steps):
            t = i * dt
            if i % k_replan == 0:
                plan_cost = _planning_cost(base_cost, x_est, cfg)
                mean, diag = planner.plan(x_est, t0=t, cost=plan_cost)
                plan_ms.append(diag.wall_ms)
                planner.advance(k_replan * dt)
                plan_t = t
            u = env.clip_control(evaluate(mean, t - plan_t))
            if est is None:
                try:
                    x_next = env.step(x, u)
                except ValueError:
                    x_next = None
            else:
                bridge, fparams, fine, sensors = est
                stream: list[Measurement] = []
                xs = x
                try:
                    for _ in range(env.substeps):
                        xn = fine.step(xs, u)
                        s_now, s_next = bridge.to_filter(xs), bridge.to_filter(xn)
                        stream += sensors.imu(fine_k, fine_k * fine.sim_dt, s_now, s_next)
                        fine_k += 1
                        stream += sensors.state_sensors(fine_k, fine_k * fine.sim_dt, s_next)
                        xs = xn
                    x_next = xs
                except ValueError:
                    x_next = None
                if x_next is not None:
                    ekf = run_multirate(ekf, stream, fparams, tick=fine.sim_dt, use_imu=cfg.estimator.use_imu)[-1]
            if x_next is None or not np.all(np.isfinite(x_next)):
                diverged = True
                break
            c = step_cost(x_next, u, t, plan_cost)
            if not math.isfinite(c):
                diverged = True
                break
            total += c
            steps += 1
            if trace_rows is not None:
                trace_rows.append([t, *x, *u, c])
            x = x_next
            x_est = x if est is None else est[0].from_filter(ekf.mean)
            if inside is not None:
                streak = streak + 1 if inside(x) else 0
                if streak >= hold_steps:
                    success = True
            if success and cfg.episode.stop_on_success:
                break
    finally:
        planner.close()
    if inside is None:
        success = not diverged
    if diverged:
        success = False
        total += DIVERGENCE_COST
    if trace_rows is not None:
        trace_rows.append([steps * dt, *x, *([math.nan] * env.control_dim), math.nan])
        write_rows(trace_path, _trace_header(env), trace_rows)
    return EpisodeReport(
        total_cost=float(total),
        success=bool(success),
        steps=steps,
        mean_plan_wall_ms=float(np.mean(plan_ms)) if plan_ms else 0.0,
        seed=int(pc.seed),
        config_hash=config_hash(cfg),
        task=cfg.task,
        diverged=diverged,
        final_state=tuple(float(v) for v in x),
    )


# --- sweeps ----------------------------------------------------------------------------

# sweep parameter -> planner field it overrides
SWEEP_PARAMETERS = {
    "representation": "order",
    "control_frequency": "update_rate",
    "temperature": "temperature",
    "horizon": "horizon_steps",
    "num_samples": "num_samples",
}


def _parse_value(param: str, value):
    if param == "representation":
        return Order.parse(value)
    if param in ("horizon", "num_samples"):
        v = float(value)
        if v != int(v):
            raise ConfigError(f"sweep.{param}", f"expected an integer, got {value!r}")
        return int(v)
    return float(value)


def apply_override(cfg: TaskConfig, param: str, value) -> TaskConfig:
    """Copy of ``cfg`` with one swept planner parameter replaced."""
    if param not in SWEEP_PARAMETERS:
        raise ConfigError("sweep.param", f"unknown sweep parameter {param!r}; choose from {sorted(SWEEP_PARAMETERS)}")
    try:
        planner = dataclasses.replace(cfg.planner, **{SWEEP_PARAMETERS[param]: _parse_value(param, value)})
    except ValueError as exc:
        raise ConfigError(f"planner.{SWEEP_PARAMETERS[param]}", str(exc)) from exc
    return dataclasses.replace(cfg, planner=planner)


def _value_label(value) -> str:
    return value.value if isinstance(value, Order) else str(value)


def sweep(
    cfg: TaskConfig,
    param: str,
    values: Sequence,
    seeds: Sequence[int] = tuple(range(10)),
    out: str | Path | None = None,
    progress: Callable[[EpisodeReport, str], None] | None = None,
) -> list[dict]:
    """Run every (value, seed) cell; failures are recorded and the sweep continues."""
    if not values:
        raise ConfigError("sweep.values", "value list must be non-empty")
    if not seeds:
        raise ConfigError("sweep.seeds", "seed list must be non-empty")
    cells = [(v, apply_override(cfg, param, v)) for v in values]
    rows = []
    for value, cell_cfg in cells:
        label = _value_label(_parse_value(param, value))
        for s in seeds:
            try:
                report = run_episode(cell_cfg, seed=s)
            except (ValueError, RuntimeError) as exc:
                report = EpisodeReport(math.inf, False, 0, 0.0, int(s), config_hash(cell_cfg), cfg.task, diverged=True)
                if progress is not None:
                    progress(report, f"error: {exc}")
            row = report.to_row(param, label)
            row["_report"] = report
            rows.append(row)
            if progress is not None:
                progress(report, label)
    if out is not None:
        write_rows(out, EPISODE_COLUMNS, [[r[c] for c in EPISODE_COLUMNS] for r in rows])
    return rows


def summarize(rows: Sequence[dict]) -> list[dict]:
    """Mean and standard deviation of total cost per swept value, in sweep order."""
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["task"], r["param_name"], r["param_value"]), []).append(r)
    out = []
    for (task, name, value), rs in groups.items():
        costs = [float(r["total_cost"]) for r in rs]
        out.append(
            {
                "task": task,
                "param_name": name,
                "param_value": value,
                "runs": len(rs),
                "mean_cost": statistics.fmean(costs),
                "std_cost": statistics.pstdev(costs) if len(costs) > 1 else 0.0,
                "success_rate": sum(int(r["success"]) for r in rs) / len(rs),
            }
        )
    return out


# --- benchmark ---------------------------------------------------------------------------


def bench(
    cfg: TaskConfig,
    sample_counts: Sequence[int] = (30,),
    worker_counts: Sequence[int] = (1,),
    iterations: int = 100,
    warmup: int = 10,
    seed: int = 0,
) -> list[dict]:
    """Median and 95th-percentile ``evaluate`` wall time per (N, workers) cell."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    env = cfg.build_env()
    cost = cfg.build_cost(env)
    x0 = np.asarray(cfg.episode.initial_state if cfg.episode.initial_state is not None else env.initial_state(), dtype=float)
    T = cfg.planner.horizon_steps
    rng = np.random.default_rng(seed)
    rows = []
    for n in sample_counts:
        controls = rng.uniform(env.lower, env.upper, size=(int(n), T, env.control_dim))
        for w in worker_counts:
            with RolloutEngine(env, workers=int(w)) as engine:
                for _ in range(warmup):
                    engine.evaluate(x0, controls, cost)
                times = []
                for _ in range(iterations):
                    start = time.perf_counter()
                    engine.evaluate(x0, controls, cost)
                    times.append((time.perf_counter() - start) * 1e3)
            rows.append(
                {
                    "n_samples": int(n),
                    "workers": int(w),
                    "median_ms": float(np.median(times)),
                    "p95_ms": float(np.percentile(times, 95)),
                }
            )
    return rows


# --- synthetic logs -------------------------------------------------------------------------


def _excitation(env: EnvModel, t: float) -> np.ndarray:
    """Smooth, bounded open-loop input used to generate estimator test logs."""
    lo, hi = env.lower, env.upper
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    phases = np.arange(env.control_dim)
    return mid + 0.6 * half * np.sin((1.3 + 0.4 * phases) * t + phases)


def simulate_measurements(
    cfg: TaskConfig, duration: float = 10.0, seed: int = 0
) -> tuple[list[Measurement], np.ndarray, np.ndarray, EstimatorBridge]:
    """Simulate the task's environment under a smooth input and sample its sensors.

    Returns ``(stream, times, truth, bridge)``: the time-ordered measurements,
    the sensor tick times and the ground truth in the filter's layout.
    """
    env = cfg.build_env()
    bridge = estimator_bridge(env)
    fine = _fine_env(env)
    h = fine.sim_dt
    sensors = _SensorSuite(cfg, bridge, h, np.random.default_rng([cfg.estimator.noise_seed, int(seed)]))
    x = np.asarray(cfg.episode.initial_state if cfg.episode.initial_state is not None else env.initial_state(), dtype=float)
    n = int(round(duration / h))
    truth = [bridge.to_filter(x)]
    stream: list[Measurement] = []
    for k in range(n):
        t = k * h
        xn = fine.step(x, _excitation(env, t))
        s_now, s_next = truth[-1], bridge.to_filter(xn)
        stream += sensors.imu(k, t, s_now, s_next)
        stream += sensors.state_sensors(k + 1, (k + 1) * h, s_next)
        truth.append(s_next)
        x = xn
    return stream, np.arange(n + 1) * h, np.asarray(truth), bridge


def generate_synthetic_log(cfg: TaskConfig, out_dir: str | Path, duration: float = 10.0, seed: int = 0) -> tuple[Path, Path]:
    """Write ``measurements.csv`` and ``ground_truth.csv`` into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stream, times, truth, bridge = simulate_measurements(cfg, duration, seed)
    meas_path = out_dir / "measurements.csv"
    truth_path = out_dir / "ground_truth.csv"
    write_measurement_log(meas_path, stream, bridge.layout)
    write_rows(truth_path, ["timestamp_s"] + bridge.layout.labels(), [[t, *s] for t, s in zip(times, truth)])
    return meas_path, truth_path


def replay(cfg: TaskConfig, stream: Sequence[Measurement], use_imu: bool = True, init_std: float = 0.05) -> list[EkfState]:
    """Filter a measurement stream with the task's estimator settings."""
    env = cfg.build_env()
    bridge = estimator_bridge(env)
    fparams = _filter_params(cfg, bridge)
    x0 = np.asarray(cfg.episode.initial_state if cfg.episode.initial_state is not None else env.initial_state(), dtype=float)
    ekf = initial_state(bridge.layout, bridge.to_filter(x0), std=init_std)
    return run_multirate(ekf, stream, fparams, tick=_fine_env(env).sim_dt, use_imu=use_imu)


# --- CSV ------------------------------------------------------------------------------------------


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    return v


def write_rows(path: str | Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
