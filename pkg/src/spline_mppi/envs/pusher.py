"""Planar pusher: a disk robot moves a square box across the floor.

State (positions first, then velocities)::

    0 rx   1 ry   2 bx   3 by   4 b_yaw
    5 rvx  6 rvy  7 bvx  8 bvy  9 b_yaw_rate

Control is the planar force on the robot. The robot brakes through viscous
ground damping; the box slides with regularized Coulomb friction. Robot-box
contact is a penalty spring with damping and regularized friction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .base import CompiledEnv
from .primitives import contact_nb, friction_nb

KIND = 2

# mean distance of a uniform square's area from its center, as a fraction of the side
_SQUARE_FRICTION_RADIUS = 0.3826


@dataclass(frozen=True, eq=False)
class PlanarPusher(CompiledEnv):
    robot_mass: float = 12.0
    robot_radius: float = 0.2
    robot_damping: float = 30.0
    box_mass: float = 3.5
    box_side: float = 0.36
    ground_friction: float = 0.4
    gravity: float = 9.81
    contact_stiffness: float = 2.0e4
    contact_damping: float = 100.0
    contact_friction: float = 0.3
    friction_regularization_velocity: float = 0.05
    force_limit: float = 60.0
    sim_dt: float = 0.01
    substeps: int = 5
    robot_start: tuple = (0.0, 0.0)
    box_start: tuple = (1.0, 0.0)

    name = "pusher"
    kind = KIND
    state_dim = 10
    control_dim = 2
    box_index = (2, 3)
    state_labels = ("rx", "ry", "bx", "by", "b_yaw", "rvx", "rvy", "bvx", "bvy", "b_yaw_rate")

    def __post_init__(self):
        if self.robot_mass <= 0 or self.box_mass <= 0 or self.box_side <= 0 or self.robot_radius <= 0:
            raise ValueError("pusher masses and sizes must be positive")
        super().__post_init__()

    @property
    def lower(self):
        return np.full(2, -self.force_limit)

    @property
    def upper(self):
        return np.full(2, self.force_limit)

    def initial_state(self):
        x = np.zeros(10)
        x[0:2] = self.robot_start
        x[2:4] = self.box_start
        return x

    def _pack(self):
        return [
            *self._header(),
            self.robot_mass,
            self.robot_radius,
            self.robot_damping,
            self.box_mass,
            self.box_side,
            self.ground_friction,
            self.gravity,
            self.contact_stiffness,
            self.contact_damping,
            self.contact_friction,
            self.friction_regularization_velocity,
        ]


@njit(cache=True, nogil=True)
def robot_box_contact(p, x):
    """Force on the robot and torque on the box from robot-box contact.

    Returns ``(fx, fy, box_torque)``; the box receives ``(-fx, -fy)``.
    """
    r_rad, side = p[7], p[10]
    k, c, mu, vreg = p[13], p[14], p[15], p[16]
    rx, ry, bx, by, yaw = x[0], x[1], x[2], x[3], x[4]
    rvx, rvy, bvx, bvy, bw = x[5], x[6], x[7], x[8], x[9]
    cy = math.cos(yaw)
    sy = math.sin(yaw)
    # robot center in the box frame
    dx = rx - bx
    dy = ry - by
    lx = cy * dx + sy * dy
    ly = -sy * dx + cy * dy
    half = 0.5 * side
    qx = min(max(lx, -half), half)
    qy = min(max(ly, -half), half)
    ex = lx - qx
    ey = ly - qy
    dist = math.sqrt(ex * ex + ey * ey)
    if dist > 0.0:
        if dist >= r_rad:
            return 0.0, 0.0, 0.0
        nlx = ex / dist
        nly = ey / dist
        pen = r_rad - dist
    else:
        # center inside the box: leave through the nearest face
        if half - abs(lx) < half - abs(ly):
            nlx = 1.0 if lx >= 0.0 else -1.0
            nly = 0.0
            pen = r_rad + half - abs(lx)
            qx = nlx * half
        else:
            nlx = 0.0
            nly = 1.0 if ly >= 0.0 else -1.0
            pen = r_rad + half - abs(ly)
            qy = nly * half
    # world-frame normal (box -> robot) and contact arm from the box center
    nx = cy * nlx - sy * nly
    ny = sy * nlx + cy * nly
    ax = cy * qx - sy * qy
    ay = sy * qx + cy * qy
    # robot velocity relative to the box material point at the contact
    vrel_x = rvx - (bvx - bw * ay)
    vrel_y = rvy - (bvy + bw * ax)
    vn = vrel_x * nx + vrel_y * ny
    vt = -vrel_x * ny + vrel_y * nx
    fn, ft = contact_nb(pen, vn, vt, k, c, mu, vreg)
    fx = fn * nx - ft * ny
    fy = fn * ny + ft * nx
    torque = ax * (-fy) - ay * (-fx)
    return fx, fy, torque


@njit(cache=True, nogil=True)
def step_nb(p, x, u, out):
    h = p[0]
    nsub = int(p[1])
    ux = min(max(u[0], p[2]), p[4])
    uy = min(max(u[1], p[3]), p[5])
    mr, rdamp, mb, side, mu_g, g, vreg = p[6], p[8], p[9], p[10], p[11], p[12], p[16]
    inertia = mb * side * side / 6.0
    normal = mb * g
    rho = _SQUARE_FRICTION_RADIUS * side
    for i in range(10):
        out[i] = x[i]
    for _ in range(nsub):
        fx, fy, torque = robot_box_contact(p, out)
        # robot
        out[5] += (ux + fx - rdamp * out[5]) / mr * h
        out[6] += (uy + fy - rdamp * out[6]) / mr * h
        # box, ground friction opposing the sliding velocity
        bvx, bvy = out[7], out[8]
        speed = math.sqrt(bvx * bvx + bvy * bvy)
        gx = 0.0
        gy = 0.0
        if speed > 0.0:
            f = friction_nb(normal, speed, mu_g, vreg)
            gx = f * bvx / speed
            gy = f * bvy / speed
        tau_g = friction_nb(normal, out[9] * rho, mu_g, vreg) * rho
        out[7] += (gx - fx) / mb * h
        out[8] += (gy - fy) / mb * h
        out[9] += (torque + tau_g) / inertia * h
        out[0] += out[5] * h
        out[1] += out[6] * h
        out[2] += out[7] * h
        out[3] += out[8] * h
        out[4] += out[9] * h
