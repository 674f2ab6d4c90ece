"""Vertical hopper: a body on an actuated prismatic leg with a light foot.

State ``[z_body, z_foot, vz_body, vz_foot]``; the leg length is
``z_body - z_foot``. The control is a leg-length target tracked by a PD loop
at every substep, with body-weight feedforward so that holding the current
length while standing is an equilibrium.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .base import CompiledEnv
from .primitives import ContactParams, PDParams, contact_nb, pd_scalar_nb

KIND = 3


@dataclass(frozen=True, eq=False)
class Hopper(CompiledEnv):
    body_mass: float = 8.0
    foot_mass: float = 2.0
    gravity: float = 9.81
    leg_pd: PDParams = field(default_factory=lambda: PDParams(kp=1.5e4, kd=600.0, torque_limit=1000.0))
    ground: ContactParams = field(
        default_factory=lambda: ContactParams(stiffness=5.0e4, damping=300.0, friction_coefficient=0.0)
    )
    min_leg: float = 0.15
    max_leg: float = 0.45
    # hard stop below min_leg so impacts cannot fold the leg through the foot
    stop_stiffness: float = 2.0e5
    start_height: float = 0.0
    sim_dt: float = 0.01
    substeps: int = 5

    name = "hopper"
    kind = KIND
    state_dim = 4
    control_dim = 1
    state_labels = ("z_body", "z_foot", "vz_body", "vz_foot")

    def __post_init__(self):
        if self.body_mass <= 0 or self.foot_mass <= 0:
            raise ValueError("hopper masses must be positive")
        if not 0 < self.min_leg < self.max_leg:
            raise ValueError("need 0 < min_leg < max_leg")
        super().__post_init__()

    @property
    def lower(self):
        return np.array([self.min_leg])

    @property
    def upper(self):
        return np.array([self.max_leg])

    @property
    def nominal_leg(self) -> float:
        return 0.5 * (self.min_leg + self.max_leg)

    def standing_state(self, leg: float | None = None) -> np.ndarray:
        """Static equilibrium with the foot resting on its ground spring."""
        leg = self.nominal_leg if leg is None else leg
        z_foot = -(self.body_mass + self.foot_mass) * self.gravity / self.ground.stiffness
        return np.array([z_foot + leg, z_foot, 0.0, 0.0])

    def initial_state(self):
        x = self.standing_state()
        x[:2] += self.start_height
        return x

    def hold_control(self, state):
        return np.array([state[0] - state[1]])

    def nominal_control(self):
        return np.array([self.nominal_leg])

    def _pack(self):
        return [
            *self._header(),
            self.body_mass,
            self.foot_mass,
            self.gravity,
            float(self.leg_pd.kp),
            float(self.leg_pd.kd),
            float(self.leg_pd.torque_limit),
            self.ground.stiffness,
            self.ground.damping,
            self.min_leg,
            self.stop_stiffness,
        ]


@njit(cache=True, nogil=True)
def step_nb(p, x, u, out):
    h = p[0]
    nsub = int(p[1])
    target = min(max(u[0], p[2]), p[3])
    M, mf, g, kp, kd, lim, kg, cg, min_leg, kstop = p[4], p[5], p[6], p[7], p[8], p[9], p[10], p[11], p[12], p[13]
    zb, zf, vb, vf = x[0], x[1], x[2], x[3]
    for _ in range(nsub):
        leg = zb - zf
        leg_rate = vb - vf
        force = pd_scalar_nb(leg, leg_rate, target, kp, kd, lim) + M * g
        if leg < min_leg:
            force += kstop * (min_leg - leg)
        ground, _ = contact_nb(-zf, vf, 0.0, kg, cg, 0.0, 1.0)
        vb += (force / M - g) * h
        vf += ((ground - force) / mf - g) * h
        zb += vb * h
        zf += vf * h
    out[0] = zb
    out[1] = zf
    out[2] = vb
    out[3] = vf
