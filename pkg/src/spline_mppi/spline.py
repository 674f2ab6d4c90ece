"""Knot-point control trajectories.

A control trajectory over the planning horizon is stored as values at a small
number of knots and expanded to per-step controls by interpolation. Every
interpolation order used here is linear in the knot values, which is what lets
the planner average samples at the knot level.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Order",
    "KnotTrajectory",
    "HoldLast",
    "Reference",
    "evaluate",
    "evaluate_dense",
    "evaluate_times",
    "shift",
    "uniform_knot_times",
]


class Order(str, enum.Enum):
    DIRECT = "Direct"
    ZERO = "ZerothOrder"
    LINEAR = "Linear"
    CUBIC = "Cubic"

    @classmethod
    def parse(cls, value: "Order | str") -> "Order":
        if isinstance(value, cls):
            return value
        for member in cls:
            if value in (member.value, member.name) or str(value).lower() == member.value.lower():
                return member
        raise ValueError(f"unknown interpolation order {value!r}; expected one of {[m.value for m in cls]}")


# Step-lookup orders tolerate this much (relative to the knot span) rounding in
# query times, so that t0 + i*dt lands on knot i even when computed differently.
_LOOKUP_RTOL = 1e-9


@dataclass(frozen=True)
class KnotTrajectory:
    """Control values at knot times plus the rule used to fill the gaps.

    ``knot_values`` has shape ``(K, m)``. Instances are immutable: the arrays
    are copied and marked read-only on construction.
    """

    knot_times: np.ndarray
    knot_values: np.ndarray
    order: Order = Order.CUBIC

    def __post_init__(self):
        times = np.array(self.knot_times, dtype=float).reshape(-1)
        values = np.array(self.knot_values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        order = Order.parse(self.order)
        if times.size == 0:
            raise ValueError("trajectory needs at least one knot")
        if values.ndim != 2 or values.shape[0] != times.size:
            raise ValueError(f"knot_values shape {values.shape} does not match {times.size} knots")
        if not np.all(np.isfinite(times)) or not np.all(np.isfinite(values)):
            raise ValueError("knot times and values must be finite")
        if np.any(np.diff(times) <= 0):
            raise ValueError("knot_times must be strictly increasing")
        if order in (Order.LINEAR, Order.CUBIC) and times.size < 2:
            raise ValueError(f"{order.value} interpolation needs at least 2 knots")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "knot_times", times)
        object.__setattr__(self, "knot_values", values)
        object.__setattr__(self, "order", order)

    @property
    def num_knots(self) -> int:
        return self.knot_times.size

    @property
    def control_dim(self) -> int:
        return self.knot_values.shape[1]

    def with_values(self, values: np.ndarray) -> "KnotTrajectory":
        return KnotTrajectory(self.knot_times, values, self.order)


def uniform_knot_times(num_knots: int, horizon_steps: int, dt: float, order: Order | str = Order.CUBIC) -> np.ndarray:
    """Evenly spaced knots over the control steps ``0 .. (T-1)*dt``.

    ``Direct`` ignores ``num_knots`` and places one knot per step.
    """
    order = Order.parse(order)
    if horizon_steps < 1 or dt <= 0:
        raise ValueError("horizon_steps must be >= 1 and dt > 0")
    if order is Order.DIRECT:
        return np.arange(horizon_steps) * dt
    if num_knots < 1:
        raise ValueError("num_knots must be >= 1")
    span = (horizon_steps - 1) * dt
    if num_knots == 1:
        return np.zeros(1)
    if span <= 0:
        # a one-step horizon cannot hold distinct knots; spread them over dt
        span = dt
    return np.linspace(0.0, span, num_knots)


def _lookup_index(knot_times: np.ndarray, t: np.ndarray) -> np.ndarray:
    span = knot_times[-1] - knot_times[0]
    tol = _LOOKUP_RTOL * max(span, 1.0)
    idx = np.searchsorted(knot_times, t + tol, side="right") - 1
    return np.clip(idx, 0, knot_times.size - 1)


def _hermite_tangents(knot_times: np.ndarray, values: np.ndarray) -> np.ndarray:
    # values: (..., K, m); centered differences inside, one-sided at the ends
    K = knot_times.size
    tangents = np.empty_like(values)
    tangents[..., 0, :] = (values[..., 1, :] - values[..., 0, :]) / (knot_times[1] - knot_times[0])
    tangents[..., K - 1, :] = (values[..., K - 1, :] - values[..., K - 2, :]) / (knot_times[K - 1] - knot_times[K - 2])
    if K > 2:
        span = (knot_times[2:] - knot_times[:-2])[:, None]
        tangents[..., 1:-1, :] = (values[..., 2:, :] - values[..., :-2, :]) / span
    return tangents


def evaluate_times(
    knot_times: np.ndarray, values: np.ndarray, order: Order | str, t: np.ndarray
) -> np.ndarray:
    """Evaluate one or many trajectories sharing ``knot_times`` at times ``t``.

    Parameters
    ----------
    knot_times : (K,) array
    values : (..., K, m) array
        Leading axes index independent trajectories (e.g. MPPI samples).
    order : Order
    t : (P,) array of query times; clamped to the knot range.

    Returns
    -------
    (..., P, m) array
    """
    order = Order.parse(order)
    t = np.asarray(t, dtype=float).reshape(-1)
    if not np.all(np.isfinite(t)):
        raise ValueError("query times must be finite")
    K = knot_times.size
    tq = np.clip(t, knot_times[0], knot_times[-1])

    if order in (Order.ZERO, Order.DIRECT) or K == 1:
        return values[..., _lookup_index(knot_times, tq), :]

    seg = np.clip(np.searchsorted(knot_times, tq, side="right") - 1, 0, K - 2)
    t0 = knot_times[seg]
    h = knot_times[seg + 1] - t0
    u = ((tq - t0) / h)[:, None]
    v0 = values[..., seg, :]
    v1 = values[..., seg + 1, :]
    if order is Order.LINEAR:
        # this form reproduces both endpoints exactly
        return (1.0 - u) * v0 + u * v1

    tangents = _hermite_tangents(knot_times, values)
    m0 = tangents[..., seg, :]
    m1 = tangents[..., seg + 1, :]
    h = h[:, None]
    h00 = u * u * (2.0 * u - 3.0) + 1.0
    h10 = u * (u * (u - 2.0) + 1.0)
    h01 = u * u * (3.0 - 2.0 * u)
    h11 = u * u * (u - 1.0)
    return h00 * v0 + h10 * h * m0 + h01 * v1 + h11 * h * m1


def evaluate(traj: KnotTrajectory, t: float) -> np.ndarray:
    """Control vector at time ``t`` (clamped to the knot range)."""
    t = float(t)
    if not np.isfinite(t):
        raise ValueError(f"cannot evaluate trajectory at t={t}")
    return evaluate_times(traj.knot_times, traj.knot_values, traj.order, np.array([t]))[0]


def evaluate_dense(traj: KnotTrajectory, t0: float, dt: float, T: int) -> np.ndarray:
    """Rows ``evaluate(traj, t0 + i*dt)`` for ``i < T`` as a ``(T, m)`` matrix."""
    if dt <= 0 or T < 1:
        raise ValueError("evaluate_dense needs dt > 0 and T >= 1")
    times = t0 + np.arange(T) * dt
    return evaluate_times(traj.knot_times, traj.knot_values, traj.order, times)


@dataclass(frozen=True)
class HoldLast:
    """Shift fill: repeat the old final knot value."""


@dataclass(frozen=True)
class Reference:
    """Shift fill: use a fixed control vector."""

    value: Sequence[float]


def shift(traj: KnotTrajectory, delta: float, fill: HoldLast | Reference | None = None) -> KnotTrajectory:
    """Advance the trajectory by ``delta`` seconds, keeping the knot times.

    Knots whose query time ``t_i + delta`` falls past the last knot take the
    ``fill`` value instead of the clamped spline value.
    """
    if not delta >= 0:
        raise ValueError(f"shift delta must be >= 0, got {delta}")
    fill = HoldLast() if fill is None else fill
    if delta == 0:
        return traj
    query = traj.knot_times + delta
    values = evaluate_times(traj.knot_times, traj.knot_values, traj.order, query).copy()
    span = traj.knot_times[-1] - traj.knot_times[0]
    beyond = query > traj.knot_times[-1] + _LOOKUP_RTOL * max(span, 1.0)
    if np.any(beyond):
        if isinstance(fill, Reference):
            fill_value = np.asarray(fill.value, dtype=float).reshape(-1)
            if fill_value.size != traj.control_dim:
                raise ValueError("reference fill has the wrong control dimension")
        else:
            fill_value = traj.knot_values[-1]
        values[beyond] = fill_value
    return traj.with_values(values)
