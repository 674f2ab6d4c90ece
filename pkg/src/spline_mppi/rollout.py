"""Batched, deterministic rollouts over a fixed pool of workers.

Each sample is simulated and costed independently inside one worker, and
samples are split into contiguous blocks, so the floating-point result for a
sample never depends on how many workers ran the batch.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .costs import CompiledCost, CostSpec, compile_cost, stage_cost_nb, step_cost
from .envs.base import EnvModel
from .envs.kernels import dispatch_step

__all__ = ["DIVERGENCE_COST", "RolloutResult", "RolloutEngine", "rollout", "rollout_batch"]

# added to the cost accumulated before a rollout left the finite range
DIVERGENCE_COST = 1.0e12


@dataclass(frozen=True)
class RolloutResult:
    states: np.ndarray  # (T+1, d); rows after divergence are NaN
    controls: np.ndarray  # (T, m)
    total_cost: float
    step_costs: np.ndarray  # (T,)
    diverged: bool
    steps_completed: int


@njit(cache=True, nogil=True)
def rollout_block(
    kind, p, x0, controls, q, r, x_ref, u_ref, box_w, box_target, box_index, terminal_weight, sentinel,
    states, step_costs, totals, diverged, completed,
):
    n, T, _ = controls.shape
    d = x0.shape[0]
    x = np.empty(d)
    y = np.empty(d)
    for i in range(n):
        x[:] = x0
        states[i, 0, :] = x0
        total = 0.0
        bad = False
        done = T
        for t in range(T):
            u = controls[i, t]
            dispatch_step(kind, p, x, u, y)
            finite = True
            for j in range(d):
                if not math.isfinite(y[j]):
                    finite = False
                    break
            c = 0.0
            if finite:
                c = stage_cost_nb(y, u, u_ref[t], q, r, x_ref, box_w, box_target, box_index, t == T - 1, terminal_weight)
            if not finite or not math.isfinite(c):
                bad = True
                done = t
                for k in range(t + 1, T + 1):
                    for j in range(d):
                        states[i, k, j] = np.nan
                for k in range(t, T):
                    step_costs[i, k] = 0.0
                break
            states[i, t + 1, :] = y
            step_costs[i, t] = c
            total += c
            x[:] = y
        totals[i] = total + sentinel if bad else total
        diverged[i] = bad
        completed[i] = done


def _python_block(env: EnvModel, x0, controls, cost: CostSpec, t0, dt, states, step_costs, totals, diverged, completed):
    n, T, _ = controls.shape
    for i in range(n):
        x = x0.copy()
        states[i, 0] = x0
        total, bad, done = 0.0, False, T
        for t in range(T):
            try:
                y = np.asarray(env.step(x, controls[i, t]), dtype=float)
                c = step_cost(y, controls[i, t], t0 + t * dt, cost, final=t == T - 1) if np.all(np.isfinite(y)) else math.inf
            except (ValueError, FloatingPointError, OverflowError):
                y, c = None, math.inf
            if y is None or not math.isfinite(c):
                bad, done = True, t
                states[i, t + 1 :] = np.nan
                step_costs[i, t:] = 0.0
                break
            states[i, t + 1] = y
            step_costs[i, t] = c
            total += c
            x = y
        totals[i] = total + DIVERGENCE_COST if bad else total
        diverged[i] = bad
        completed[i] = done


@dataclass
class BatchBuffers:
    """Reused output storage; views stay valid until the next ``evaluate``."""

    states: np.ndarray
    step_costs: np.ndarray
    totals: np.ndarray
    diverged: np.ndarray
    completed: np.ndarray
    wall_ms: float = 0.0


class RolloutEngine:
    """Runs batches of rollouts for one environment on a persistent worker pool.

    Parameters
    ----------
    env : EnvModel
        Every worker receives its own ``env.clone_for_evaluation()``.
    workers : int, optional
        Pool size; defaults to the number of CPUs. ``1`` runs inline.
    """

    def __init__(self, env: EnvModel, workers: int | None = None):
        self.env = env
        self.workers = max(1, int(workers or os.cpu_count() or 1))
        try:
            self._replicas = [env.clone_for_evaluation() for _ in range(self.workers)]
        except Exception as exc:  # noqa: BLE001 - surface as a replication error
            raise RuntimeError(f"could not replicate environment {env.name!r}: {exc}") from exc
        self._pool = ThreadPoolExecutor(max_workers=self.workers) if self.workers > 1 else None
        self._buffers: BatchBuffers | None = None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        pool = getattr(self, "_pool", None)
        if pool is not None:
            pool.shutdown(wait=False)

    def _get_buffers(self, n: int, T: int) -> BatchBuffers:
        d = self.env.state_dim
        b = self._buffers
        if b is None or b.states.shape != (n, T + 1, d):
            b = BatchBuffers(
                states=np.empty((n, T + 1, d)),
                step_costs=np.empty((n, T)),
                totals=np.empty(n),
                diverged=np.empty(n, dtype=np.bool_),
                completed=np.empty(n, dtype=np.int64),
            )
            self._buffers = b
        return b

    def _run_block(self, worker: int, a: int, b: int, x0, controls, cost, compiled: CompiledCost, t0, dt, out):
        env = self._replicas[worker]
        if env.kind is None:
            _python_block(
                env, x0, controls[a:b], cost, t0, dt,
                out.states[a:b], out.step_costs[a:b], out.totals[a:b], out.diverged[a:b], out.completed[a:b],
            )
            return
        rollout_block(
            env.kind, env.params(), x0, controls[a:b],
            compiled.q, compiled.r, compiled.x_ref, compiled.u_ref,
            compiled.box_weight, compiled.box_target, compiled.box_index, compiled.terminal_weight,
            DIVERGENCE_COST,
            out.states[a:b], out.step_costs[a:b], out.totals[a:b], out.diverged[a:b], out.completed[a:b],
        )

    def evaluate(self, x0, controls, cost: CostSpec, t0: float = 0.0) -> BatchBuffers:
        """Roll out ``controls`` of shape ``(N, T, m)`` from ``x0``.

        Returns the engine's internal buffers; copy anything that must outlive
        the next call.
        """
        env = self.env
        x0 = np.ascontiguousarray(x0, dtype=np.float64)
        controls = np.ascontiguousarray(controls, dtype=np.float64)
        if controls.ndim != 3 or controls.shape[2] != env.control_dim:
            raise ValueError(f"controls must have shape (N, T, {env.control_dim}), got {controls.shape}")
        if x0.shape != (env.state_dim,):
            raise ValueError(f"x0 must have shape ({env.state_dim},), got {x0.shape}")
        if not np.all(np.isfinite(controls)) or not np.all(np.isfinite(x0)):
            raise ValueError("rollout inputs must be finite")
        n, T, _ = controls.shape
        dt = env.sim_dt
        compiled = compile_cost(cost, t0, dt, T)
        if compiled.q.size != env.state_dim or compiled.r.size != env.control_dim:
            raise ValueError("cost weights do not match the environment dimensions")
        out = self._get_buffers(n, T)
        start = time.perf_counter()
        if self._pool is None or n == 1:
            self._run_block(0, 0, n, x0, controls, cost, compiled, t0, dt, out)
        else:
            bounds = np.linspace(0, n, min(self.workers, n) + 1).astype(int)
            futures = [
                self._pool.submit(self._run_block, w, bounds[w], bounds[w + 1], x0, controls, cost, compiled, t0, dt, out)
                for w in range(len(bounds) - 1)
            ]
            for f in futures:
                f.result()
        out.wall_ms = (time.perf_counter() - start) * 1e3
        return out

    def rollout_batch(self, x0, trajectories, cost: CostSpec, t0: float = 0.0) -> list[RolloutResult]:
        controls = np.ascontiguousarray(np.asarray(trajectories, dtype=np.float64))
        out = self.evaluate(x0, controls, cost, t0)
        return [
            RolloutResult(
                states=out.states[i].copy(),
                controls=controls[i].copy(),
                total_cost=float(out.totals[i]),
                step_costs=out.step_costs[i].copy(),
                diverged=bool(out.diverged[i]),
                steps_completed=int(out.completed[i]),
            )
            for i in range(controls.shape[0])
        ]


def rollout(env: EnvModel, x0, controls, cost: CostSpec, t0: float = 0.0) -> RolloutResult:
    """Simulate one control sequence ``(T, m)`` and accumulate its cost."""
    controls = np.asarray(controls, dtype=float)
    if controls.ndim != 2:
        raise ValueError("controls must be a (T, m) matrix")
    engine = RolloutEngine(env, workers=1)
    return engine.rollout_batch(x0, controls[None], cost, t0)[0]


def rollout_batch(env: EnvModel, x0, trajectories, cost: CostSpec, workers: int = 1, t0: float = 0.0) -> list[RolloutResult]:
    """One-shot batch helper; planners keep a :class:`RolloutEngine` instead."""
    with RolloutEngine(env, workers=workers) as engine:
        return engine.rollout_batch(x0, trajectories, cost, t0)
