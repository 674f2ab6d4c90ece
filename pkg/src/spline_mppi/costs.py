"""Stage costs: quadratic state/control tracking and the l1 box-position term.

A rollout step ``i`` is charged ``state_term(x[i+1]) + control_term(u[i], t_i)``:
the state term looks at the state the control produced. The initial state is
common to every sample and is not charged.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np
from numba import njit

from .envs.primitives import GaitParams, gait_reference

__all__ = [
    "TrackingCostSpec",
    "BoxCostSpec",
    "TrackingCost",
    "BoxPushCost",
    "CostSpec",
    "walk_step_cost",
    "box_step_cost",
    "composite_step_cost",
    "step_cost",
    "CompiledCost",
    "compile_cost",
    "stage_cost_nb",
]


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


@dataclass(frozen=True)
class TrackingCostSpec:
    """Diagonal-weight tracking of a state goal and a (time-varying) control reference.

    ``u_ref`` is a constant control vector, a :class:`GaitParams` (periodic
    joint targets) or any callable mapping an array of times ``(P,)`` to
    ``(P, m)``.
    """

    q_diag: np.ndarray
    r_diag: np.ndarray
    x_ref: np.ndarray
    u_ref: object = None
    terminal_weight: float = 1.0

    def __post_init__(self):
        q, r, xr = _vec(self.q_diag), _vec(self.r_diag), _vec(self.x_ref)
        if np.any(q < 0) or np.any(r < 0):
            raise ValueError("cost weights must be non-negative")
        if q.shape != xr.shape:
            raise ValueError(f"q_diag has {q.size} entries but x_ref has {xr.size}")
        if self.terminal_weight < 0:
            raise ValueError("terminal_weight must be non-negative")
        u_ref = self.u_ref
        if u_ref is None:
            u_ref = np.zeros_like(r)
        if not (isinstance(u_ref, GaitParams) or callable(u_ref)):
            u_ref = _vec(u_ref)
            if u_ref.shape != r.shape:
                raise ValueError(f"u_ref has {u_ref.size} entries but r_diag has {r.size}")
        object.__setattr__(self, "q_diag", q)
        object.__setattr__(self, "r_diag", r)
        object.__setattr__(self, "x_ref", xr)
        object.__setattr__(self, "u_ref", u_ref)

    def u_ref_at(self, times) -> np.ndarray:
        """Reference controls, shape ``(P, m)`` for ``P`` query times."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if isinstance(self.u_ref, GaitParams):
            out = gait_reference(times, self.u_ref)
        elif callable(self.u_ref):
            out = np.asarray(self.u_ref(times), dtype=float)
        else:
            out = np.broadcast_to(self.u_ref, (times.size, self.r_diag.size))
        out = np.asarray(out, dtype=float).reshape(times.size, -1)
        if out.shape[1] != self.r_diag.size:
            raise ValueError("u_ref returned the wrong control dimension")
        return out

    def scaled(self, factor: float) -> "TrackingCostSpec":
        return replace(self, q_diag=self.q_diag * factor, r_diag=self.r_diag * factor)


@dataclass(frozen=True)
class BoxCostSpec:
    q_box: float
    box_target: tuple = (0.0, 0.0)
    goal_tolerance: float = 0.3

    def __post_init__(self):
        if self.q_box < 0:
            raise ValueError("q_box must be non-negative")
        if not self.goal_tolerance > 0:
            raise ValueError("goal_tolerance must be positive")
        target = _vec(self.box_target)
        if target.shape != (2,):
            raise ValueError("box_target must be a planar position")
        object.__setattr__(self, "box_target", target)


@dataclass(frozen=True)
class TrackingCost:
    tracking: TrackingCostSpec

    def scaled(self, factor: float) -> "TrackingCost":
        return TrackingCost(self.tracking.scaled(factor))


@dataclass(frozen=True)
class BoxPushCost:
    """Walking cost plus l1 box-position cost.

    ``box_index`` locates the box position in the state; ``robot_index``
    locates the robot position whose reference is moved onto the box.
    """

    tracking: TrackingCostSpec
    box: BoxCostSpec
    box_index: tuple = (2, 3)
    robot_index: tuple = field(default=(0, 1))

    def with_robot_goal(self, box_position) -> "BoxPushCost":
        """Place the robot's position goal at the current box center."""
        x_ref = self.tracking.x_ref.copy()
        x_ref[list(self.robot_index)] = _vec(box_position)
        return replace(self, tracking=replace(self.tracking, x_ref=x_ref))

    def scaled(self, factor: float) -> "BoxPushCost":
        return replace(self, tracking=self.tracking.scaled(factor), box=replace(self.box, q_box=self.box.q_box * factor))


CostSpec = Union[TrackingCost, BoxPushCost]


def _state_term(x, spec: TrackingCostSpec) -> float:
    e = spec.x_ref - x
    return float(np.dot(spec.q_diag * e, e))


def _control_term(u, t, spec: TrackingCostSpec) -> float:
    e = spec.u_ref_at([t])[0] - u
    return float(np.dot(spec.r_diag * e, e))


def walk_step_cost(x_t, u_t, t: float, spec: TrackingCostSpec) -> float:
    """``(x_ref - x)' Q (x_ref - x) + (u_ref(t) - u)' R (u_ref(t) - u)``."""
    x_t, u_t = _vec(x_t), _vec(u_t)
    if x_t.shape != spec.x_ref.shape or u_t.shape != spec.r_diag.shape:
        raise ValueError("state/control dimensions do not match the cost weights")
    return _state_term(x_t, spec) + _control_term(u_t, t, spec)


def box_step_cost(box_position, spec: BoxCostSpec) -> float:
    """``q_box * ||target - box||_1`` over the planar position; yaw is ignored."""
    e = spec.box_target - _vec(box_position)[:2]
    return float(spec.q_box * (abs(e[0]) + abs(e[1])))


def composite_step_cost(x_t, u_t, t: float, box_position, spec: BoxPushCost) -> float:
    if not isinstance(spec, BoxPushCost):
        raise TypeError("composite_step_cost needs a BoxPushCost")
    return walk_step_cost(x_t, u_t, t, spec.tracking) + box_step_cost(box_position, spec.box)


def step_cost(x_next, u, t: float, spec: CostSpec, final: bool = False) -> float:
    """Cost of one rollout step; the reference path for the compiled kernel."""
    x_next, u = _vec(x_next), _vec(u)
    state = _state_term(x_next, spec.tracking)
    if isinstance(spec, BoxPushCost):
        state += box_step_cost(x_next[list(spec.box_index)], spec.box)
    if final:
        state *= spec.tracking.terminal_weight
    return state + _control_term(u, t, spec.tracking)


@dataclass(frozen=True)
class CompiledCost:
    """Flat arrays handed to the rollout kernel for one horizon."""

    q: np.ndarray
    r: np.ndarray
    x_ref: np.ndarray
    u_ref: np.ndarray  # (T, m), reference at t0 + i*dt
    box_weight: float
    box_target: np.ndarray
    box_index: np.ndarray  # int64, (-1, -1) when unused
    terminal_weight: float


def compile_cost(spec: CostSpec, t0: float, dt: float, T: int) -> CompiledCost:
    tr = spec.tracking
    times = t0 + np.arange(T) * dt
    u_ref = np.ascontiguousarray(tr.u_ref_at(times))
    if isinstance(spec, BoxPushCost):
        box_w = float(spec.box.q_box)
        target = spec.box.box_target.astype(float)
        index = np.asarray(spec.box_index, dtype=np.int64)
    else:
        box_w, target, index = 0.0, np.zeros(2), np.full(2, -1, dtype=np.int64)
    return CompiledCost(
        q=np.ascontiguousarray(tr.q_diag),
        r=np.ascontiguousarray(tr.r_diag),
        x_ref=np.ascontiguousarray(tr.x_ref),
        u_ref=u_ref,
        box_weight=box_w,
        box_target=np.ascontiguousarray(target),
        box_index=index,
        terminal_weight=float(tr.terminal_weight),
    )


@njit(cache=True, nogil=True)
def stage_cost_nb(x, u, u_ref, q, r, x_ref, box_w, box_target, box_index, final, terminal_weight):
    s = 0.0
    for j in range(x.shape[0]):
        e = x_ref[j] - x[j]
        s += q[j] * e * e
    if box_index[0] >= 0:
        s += box_w * (abs(box_target[0] - x[box_index[0]]) + abs(box_target[1] - x[box_index[1]]))
    if final:
        s *= terminal_weight
    c = 0.0
    for j in range(u.shape[0]):
        e = u_ref[j] - u[j]
        c += r[j] * e * e
    return s + c
