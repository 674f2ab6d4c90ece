"""PD tracking, penalty contact and the periodic gait reference.

The ``_nb`` functions are the implementations compiled into the rollout
kernels; the public wrappers take the parameter dataclasses.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

__all__ = [
    "PDParams",
    "ContactParams",
    "GaitParams",
    "pd_torque",
    "contact_force",
    "regularized_friction",
    "gait_reference",
    "swing_mask",
]

# Go1-class knee/hip actuator torque limit [N m]
GO1_TORQUE_LIMIT = 33.5


@dataclass(frozen=True)
class PDParams:
    kp: float | list = 100.0
    kd: float | list = 2.0
    torque_limit: float | list = GO1_TORQUE_LIMIT

    def __post_init__(self):
        if np.any(np.asarray(self.kp) < 0) or np.any(np.asarray(self.kd) < 0):
            raise ValueError("PD gains must be non-negative")
        if np.any(np.asarray(self.torque_limit) <= 0):
            raise ValueError("torque_limit must be positive")


@dataclass(frozen=True)
class ContactParams:
    stiffness: float = 2.0e4
    damping: float = 200.0
    friction_coefficient: float = 0.5
    friction_regularization_velocity: float = 0.05

    def __post_init__(self):
        if not self.stiffness > 0:
            raise ValueError("contact stiffness must be positive")
        if self.damping < 0:
            raise ValueError("contact damping must be non-negative")
        if self.friction_coefficient < 0:
            raise ValueError("friction coefficient must be non-negative")
        if not self.friction_regularization_velocity > 0:
            raise ValueError("friction regularization velocity must be positive")


@dataclass(frozen=True)
class GaitParams:
    """Phase-offset periodic joint reference.

    Joints are split evenly between legs in order: with 2 legs and 4 joints,
    joints 0-1 belong to leg 0 and joints 2-3 to leg 1.
    """

    period: float = 0.5
    duty_factor: float = 0.5
    amplitude: list = field(default_factory=lambda: [0.0])
    phase_offsets: list = field(default_factory=lambda: [0.0])
    stand_pose: list = field(default_factory=lambda: [0.0])

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("gait period must be positive")
        if not 0.0 < self.duty_factor < 1.0:
            raise ValueError("duty_factor must lie in (0, 1)")
        n_joints = len(self.stand_pose)
        if len(self.amplitude) != n_joints:
            raise ValueError("amplitude and stand_pose must have the same length")
        if not self.phase_offsets or n_joints % len(self.phase_offsets):
            raise ValueError("joint count must be a multiple of the number of legs")


@njit(cache=True, nogil=True)
def pd_scalar_nb(q, qd, target, kp, kd, limit):
    tau = kp * (target - q) - kd * qd
    if tau > limit:
        return limit
    if tau < -limit:
        return -limit
    return tau


@njit(cache=True, nogil=True)
def friction_nb(normal, tangent_velocity, mu, v_reg):
    s = tangent_velocity / v_reg
    if s > 1.0:
        s = 1.0
    elif s < -1.0:
        s = -1.0
    return -mu * normal * s


@njit(cache=True, nogil=True)
def contact_nb(penetration, normal_velocity, tangent_velocity, stiffness, damping, mu, v_reg):
    if penetration <= 0.0:
        return 0.0, 0.0
    normal = stiffness * penetration - damping * normal_velocity
    if normal < 0.0:
        normal = 0.0
    return normal, friction_nb(normal, tangent_velocity, mu, v_reg)


def pd_torque(q, qd, target, p: PDParams) -> np.ndarray:
    """``clip(kp (target - q) - kd qd, -limit, limit)`` elementwise."""
    q, qd, target = (np.asarray(a, dtype=float) for a in (q, qd, target))
    if not (q.shape == qd.shape == target.shape):
        raise ValueError("q, qd and target must have matching shapes")
    limit = np.asarray(p.torque_limit, dtype=float)
    tau = np.asarray(p.kp) * (target - q) - np.asarray(p.kd) * qd
    return np.clip(tau, -limit, limit)


def regularized_friction(normal: float, tangent_velocity: float, mu: float, v_reg: float) -> float:
    """Coulomb friction with a linear ramp below ``v_reg``."""
    return friction_nb(float(normal), float(tangent_velocity), float(mu), float(v_reg))


def contact_force(penetration: float, normal_velocity: float, tangent_velocity: float, c: ContactParams):
    """Penalty contact: returns ``(normal, tangent)`` force.

    ``normal_velocity`` is the separation rate (positive when bodies move apart),
    so approaching bodies get extra damping force. The normal force is never
    attractive and the tangent force never exceeds ``mu * normal``.
    """
    return contact_nb(
        float(penetration),
        float(normal_velocity),
        float(tangent_velocity),
        c.stiffness,
        c.damping,
        c.friction_coefficient,
        c.friction_regularization_velocity,
    )


def _leg_phases(t, g: GaitParams) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    offsets = np.asarray(g.phase_offsets, dtype=float)
    return np.mod(t[..., None] / g.period + offsets, 1.0)


def swing_mask(t, g: GaitParams) -> np.ndarray:
    """Boolean ``(..., legs)``: which legs are in their swing window at ``t``."""
    return _leg_phases(t, g) < 1.0 - g.duty_factor


def gait_reference(t, g: GaitParams) -> np.ndarray:
    """Joint targets at time ``t`` (scalar or array of times).

    Each leg follows ``stand + amplitude * sin(pi * phase / swing_fraction)``
    while in swing and holds the stand pose during stance.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("gait reference is defined for t >= 0")
    swing = 1.0 - g.duty_factor
    phases = _leg_phases(t_arr, g)
    lift = np.where(phases < swing, np.sin(np.pi * phases / swing), 0.0)
    per_leg = len(g.stand_pose) // len(g.phase_offsets)
    lift = np.repeat(lift, per_leg, axis=-1)
    return np.asarray(g.stand_pose, dtype=float) + np.asarray(g.amplitude, dtype=float) * lift

