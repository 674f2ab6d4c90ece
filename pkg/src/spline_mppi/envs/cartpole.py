"""Cart-pole with a force on the cart.

State ``[x, theta, x_dot, theta_dot]`` with ``theta = 0`` upright and the angle
kept in ``(-pi, pi]``, so quadratic costs on ``theta`` see the short way round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .base import CompiledEnv

KIND = 1


@dataclass(frozen=True, eq=False)
class CartPole(CompiledEnv):
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    half_length: float = 0.5
    gravity: float = 9.81
    cart_damping: float = 0.0
    pole_damping: float = 0.0
    force_limit: float = 10.0
    sim_dt: float = 0.01
    substeps: int = 5

    name = "cartpole"
    kind = KIND
    state_dim = 4
    control_dim = 1
    state_labels = ("x", "theta", "x_dot", "theta_dot")

    @property
    def lower(self):
        return np.array([-self.force_limit])

    @property
    def upper(self):
        return np.array([self.force_limit])

    def initial_state(self):
        return np.array([0.0, math.pi, 0.0, 0.0])

    def _pack(self):
        return [
            *self._header(),
            self.cart_mass,
            self.pole_mass,
            self.half_length,
            self.gravity,
            self.cart_damping,
            self.pole_damping,
        ]

    def upright_growth_rate(self) -> float:
        """Unstable eigenvalue of the upright equilibrium, linearized, zero force."""
        total = self.cart_mass + self.pole_mass
        return math.sqrt(self.gravity / (self.half_length * (4.0 / 3.0 - self.pole_mass / total)))


@njit(cache=True, nogil=True)
def wrap_angle(theta):
    if theta > math.pi:
        theta -= 2.0 * math.pi
    elif theta <= -math.pi:
        theta += 2.0 * math.pi
    return theta


@njit(cache=True, nogil=True)
def step_nb(p, x, u, out):
    h = p[0]
    nsub = int(p[1])
    force = min(max(u[0], p[2]), p[3])
    mc, mp, ell, g, cd, pd_ = p[4], p[5], p[6], p[7], p[8], p[9]
    total = mc + mp
    pos, th, v, w = x[0], x[1], x[2], x[3]
    for _ in range(nsub):
        s = math.sin(th)
        c = math.cos(th)
        f = force - cd * v
        tmp = (f + mp * ell * w * w * s) / total
        alpha = (g * s - c * tmp - pd_ * w / (mp * ell)) / (ell * (4.0 / 3.0 - mp * c * c / total))
        acc = tmp - mp * ell * alpha * c / total
        v += acc * h
        w += alpha * h
        pos += v * h
        th = wrap_angle(th + w * h)
    out[0] = pos
    out[1] = th
    out[2] = v
    out[3] = w
