"""MPPI over spline knots: sample, roll out, weight, average, shift."""

from __future__ import annotations

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .costs import CostSpec
from .envs.base import EnvModel
from .rollout import RolloutEngine
from .spline import HoldLast, KnotTrajectory, Order, evaluate, evaluate_times, shift, uniform_knot_times

__all__ = [
    "PlannerConfig",
    "SamplingDistribution",
    "PlanDiagnostics",
    "sample_stream",
    "sample_knots",
    "compute_weights",
    "update_mean",
    "initial_distribution",
    "optimize",
    "plan_step",
    "MPPIPlanner",
]


@dataclass(frozen=True)
class PlannerConfig:
    num_samples: int = 30
    horizon_steps: int = 40
    sim_dt: float = 0.01
    temperature: float = 0.1
    knot_count: int = 4
    order: Order = Order.CUBIC
    seed: int = 0
    include_mean_sample: bool = False
    update_rate: float = 100.0
    # per-dimension standard deviation; None means 0.1 x control range
    noise_scale: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "order", Order.parse(self.order))
        if self.noise_scale is not None:
            object.__setattr__(self, "noise_scale", tuple(float(s) for s in np.atleast_1d(self.noise_scale)))
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.horizon_steps < 1:
            raise ValueError("horizon_steps must be >= 1")
        if not self.sim_dt > 0:
            raise ValueError("sim_dt must be positive")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.knot_count < 1:
            raise ValueError("knot_count must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not self.update_rate > 0:
            raise ValueError("update_rate must be positive")
        _ = self.replan_interval  # validates update_rate against sim_dt

    @property
    def num_knots(self) -> int:
        return self.horizon_steps if self.order is Order.DIRECT else self.knot_count

    @property
    def replan_interval(self) -> int:
        """Simulation steps between plans: ``1 / (update_rate * sim_dt)``."""
        k = 1.0 / (self.update_rate * self.sim_dt)
        if k < 1.0 - 1e-9 or abs(k - round(k)) > 1e-6:
            raise ValueError(
                f"update_rate {self.update_rate} Hz must divide the simulation rate {1.0 / self.sim_dt:g} Hz"
            )
        return int(round(k))

    def knot_times(self) -> np.ndarray:
        return uniform_knot_times(self.knot_count, self.horizon_steps, self.sim_dt, self.order)


@dataclass(frozen=True)
class SamplingDistribution:
    mean: KnotTrajectory
    noise_scale: np.ndarray

    def __post_init__(self):
        scale = np.atleast_1d(np.asarray(self.noise_scale, dtype=float))
        if scale.shape != (self.mean.control_dim,):
            raise ValueError(f"noise_scale needs {self.mean.control_dim} entries, got {scale.size}")
        if not np.all(np.isfinite(scale)) or np.any(scale < 0):
            raise ValueError("noise_scale must be finite and non-negative")
        scale.setflags(write=False)
        object.__setattr__(self, "noise_scale", scale)


@dataclass
class PlanDiagnostics:
    iteration: int
    min_cost: float
    mean_cost: float
    max_cost: float
    effective_sample_size: float
    n_diverged: int
    rollout_ms: float
    wall_ms: float

    CSV_COLUMNS = (
        "iteration", "min_cost", "mean_cost", "max_cost",
        "effective_sample_size", "n_diverged", "rollout_ms", "wall_ms",
    )

    def to_row(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k in self.CSV_COLUMNS}


def _philox_state(seed: int, iteration: int, sample: int) -> dict:
    return {
        "bit_generator": "Philox",
        "state": {
            "counter": np.array([0, 0, iteration, sample], dtype=np.uint64),
            "key": np.array([seed, 0], dtype=np.uint64),
        },
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }


def sample_stream(seed: int, iteration: int, sample: int) -> np.random.Generator:
    """Counter-based stream for one sample of one planner iteration.

    Philox keyed by the run seed, with the iteration and sample index in the
    high counter words, so any sample's noise can be drawn independently of
    every other sample and of the order they are drawn in.
    """
    bg = np.random.Philox(0)
    bg.state = _philox_state(int(seed), int(iteration), int(sample))
    return np.random.Generator(bg)


_local = threading.local()


def _draw_normal(seed: int, iteration: int, sample: int, shape) -> np.ndarray:
    # same stream as sample_stream(), reusing one generator per thread
    gen = getattr(_local, "gen", None)
    if gen is None:
        gen = _local.gen = np.random.Generator(np.random.Philox(0))
    gen.bit_generator.state = _philox_state(seed, iteration, sample)
    return gen.standard_normal(shape)


def sample_knots(
    dist: SamplingDistribution,
    cfg: PlannerConfig,
    iteration: int,
    lower=None,
    upper=None,
    workers: int = 1,
) -> np.ndarray:
    """Draw ``N`` perturbed knot matrices, shape ``(N, K, m)``.

    Gaussian noise with per-dimension scale ``dist.noise_scale`` is added to
    the mean knots and the result clamped to ``[lower, upper]``. With
    ``include_mean_sample`` the first sample is the mean itself.
    """
    mean = dist.mean.knot_values
    m = mean.shape[1]
    lower = np.full(m, -np.inf) if lower is None else np.asarray(lower, dtype=float)
    upper = np.full(m, np.inf) if upper is None else np.asarray(upper, dtype=float)
    N = cfg.num_samples
    seed, it = int(cfg.seed), int(iteration)
    noise = np.empty((N,) + mean.shape)
    first = 1 if cfg.include_mean_sample else 0
    noise[:first] = 0.0
    if workers > 1 and N - first > 1:
        def draw(n):
            noise[n] = _draw_normal(seed, it, n, mean.shape)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(draw, range(first, N)))
    else:
        for n in range(first, N):
            noise[n] = _draw_normal(seed, it, n, mean.shape)
    out = np.minimum(np.maximum(mean + noise * dist.noise_scale, lower), upper)
    if first:
        out[0] = mean
    return out


def compute_weights(costs, temperature: float) -> np.ndarray:
    """Normalized ``exp(-(L_n - L_min) / temperature)``."""
    costs = np.asarray(costs, dtype=float).reshape(-1)
    if costs.size == 0:
        raise ValueError("compute_weights needs at least one cost")
    if not np.all(np.isfinite(costs)):
        raise ValueError("costs must be finite; cap diverged rollouts before weighting")
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    w = np.exp(-(costs - costs.min()) / temperature)
    return w / w.sum()


def update_mean(samples, weights, order: Order | None = None, knot_times=None) -> KnotTrajectory:
    """Weighted average of the sample knots.

    ``samples`` is either a sequence of :class:`KnotTrajectory` sharing knot
    times and order, or an ``(N, K, m)`` array together with ``knot_times`` and
    ``order``.
    """
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if isinstance(samples, np.ndarray):
        if order is None or knot_times is None:
            raise ValueError("array samples need knot_times and order")
        values = samples
    else:
        samples = list(samples)
        if not samples:
            raise ValueError("update_mean needs at least one sample")
        first = samples[0]
        for s in samples[1:]:
            if (
                s.knot_values.shape != first.knot_values.shape
                or s.order is not first.order
                or not np.array_equal(s.knot_times, first.knot_times)
            ):
                raise ValueError("samples must share knot times, order and dimensions")
        values = np.stack([s.knot_values for s in samples])
        order, knot_times = first.order, first.knot_times
    if values.ndim != 3 or values.shape[0] != weights.size:
        raise ValueError(f"{weights.size} weights for samples of shape {values.shape}")
    # offsets from the heaviest sample keep identical or one-hot inputs exact
    base = values[int(np.argmax(weights))]
    mean = base + (weights[:, None, None] * (values - base)).sum(axis=0)
    return KnotTrajectory(knot_times, mean, order)


def initial_distribution(cfg: PlannerConfig, env: EnvModel, value=None) -> SamplingDistribution:
    """Constant mean at ``value`` (the env's nominal control by default)."""
    m = env.control_dim
    value = env.nominal_control() if value is None else np.asarray(value, dtype=float)
    value = env.clip_control(np.broadcast_to(value, (m,)))
    times = cfg.knot_times()
    mean = KnotTrajectory(times, np.tile(value, (times.size, 1)), cfg.order)
    if cfg.noise_scale is None:
        scale = 0.1 * (env.upper - env.lower)
    else:
        scale = np.broadcast_to(np.asarray(cfg.noise_scale, dtype=float), (m,)).copy()
    return SamplingDistribution(mean, scale)


def _check_dist(dist: SamplingDistribution, cfg: PlannerConfig, env: EnvModel):
    if dist.mean.control_dim != env.control_dim:
        raise ValueError("sampling distribution does not match the environment control dimension")
    if dist.mean.order is not cfg.order:
        raise ValueError(f"distribution order {dist.mean.order.value} differs from config {cfg.order.value}")
    if cfg.order is Order.DIRECT and dist.mean.num_knots != cfg.horizon_steps:
        raise ValueError("Direct sampling needs one knot per horizon step")


def optimize(
    x0,
    dist: SamplingDistribution,
    cfg: PlannerConfig,
    engine: RolloutEngine,
    cost: CostSpec,
    iteration: int = 0,
    t0: float = 0.0,
) -> tuple[KnotTrajectory, PlanDiagnostics]:
    """One MPPI update of the mean, without emitting a control or shifting."""
    start = time.perf_counter()
    env = engine.env
    _check_dist(dist, cfg, env)
    knots = sample_knots(dist, cfg, iteration, env.lower, env.upper)
    times = np.arange(cfg.horizon_steps) * cfg.sim_dt
    controls = evaluate_times(dist.mean.knot_times, knots, cfg.order, times)
    out = engine.evaluate(x0, controls, cost, t0)
    costs = out.totals
    weights = compute_weights(costs, cfg.temperature)
    mean = update_mean(knots, weights, cfg.order, dist.mean.knot_times)
    diag = PlanDiagnostics(
        iteration=iteration,
        min_cost=float(costs.min()),
        mean_cost=float(costs.mean()),
        max_cost=float(costs.max()),
        effective_sample_size=float(1.0 / np.sum(weights * weights)),
        n_diverged=int(out.diverged.sum()),
        rollout_ms=out.wall_ms,
        wall_ms=(time.perf_counter() - start) * 1e3,
    )
    return mean, diag


def plan_step(
    x0,
    dist: SamplingDistribution,
    cfg: PlannerConfig,
    env: EnvModel,
    cost: CostSpec,
    iteration: int = 0,
    engine: RolloutEngine | None = None,
    t0: float = 0.0,
):
    """Full MPPI iteration.

    Returns ``(control, shifted_distribution, diagnostics)``: the control is the
    updated mean at ``t = 0``, and the returned distribution's mean has been
    shifted by ``1 / update_rate`` with the last knot held.
    """
    own_engine = engine is None
    engine = RolloutEngine(env, workers=1) if own_engine else engine
    try:
        mean, diag = optimize(x0, dist, cfg, engine, cost, iteration, t0)
    finally:
        if own_engine:
            engine.close()
    control = evaluate(mean, 0.0)
    next_dist = SamplingDistribution(shift(mean, 1.0 / cfg.update_rate, HoldLast()), dist.noise_scale)
    return control, next_dist, diag


class MPPIPlanner:
    """Receding-horizon controller owning its distribution and worker pool."""

    def __init__(self, cfg: PlannerConfig, env: EnvModel, cost: CostSpec, workers: int | None = 1, init_value=None):
        self.cfg = cfg
        self.env = env
        self.cost = cost
        self.engine = RolloutEngine(env, workers=workers)
        self._init_value = init_value
        self.reset()

    def reset(self):
        self.dist = initial_distribution(self.cfg, self.env, self._init_value)
        self.iteration = 0
        self.mean: KnotTrajectory | None = None

    def close(self):
        self.engine.close()

    def plan(self, x0, t0: float = 0.0, cost: CostSpec | None = None) -> tuple[KnotTrajectory, PlanDiagnostics]:
        """Optimize from ``x0`` and return the (unshifted) updated mean."""
        mean, diag = optimize(x0, self.dist, self.cfg, self.engine, cost or self.cost, self.iteration, t0)
        self.mean = mean
        self.iteration += 1
        return mean, diag

    def advance(self, delta: float):
        """Shift the last plan by ``delta`` seconds to seed the next one."""
        if self.mean is None:
            raise RuntimeError("advance() called before plan()")
        self.dist = SamplingDistribution(shift(self.mean, delta, HoldLast()), self.dist.noise_scale)

    def step(self, x0, t0: float = 0.0, cost: CostSpec | None = None):
        mean, diag = self.plan(x0, t0, cost)
        self.advance(1.0 / self.cfg.update_rate)
        return evaluate(mean, 0.0), diag


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return 1.0 / float(np.sum(w * w))
