"""Planar point mass pushed by a bounded force.

State ``[x, y, vx, vy]``, control ``[fx, fy]`` in newtons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .base import CompiledEnv

KIND = 0


@dataclass(frozen=True, eq=False)
class DoubleIntegrator(CompiledEnv):
    mass: float = 1.0
    damping: float = 0.0
    force_limit: float = 2.0
    sim_dt: float = 0.01
    substeps: int = 5

    name = "double_integrator"
    kind = KIND
    state_dim = 4
    control_dim = 2
    state_labels = ("x", "y", "vx", "vy")

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        super().__post_init__()

    @property
    def lower(self):
        return np.full(2, -self.force_limit)

    @property
    def upper(self):
        return np.full(2, self.force_limit)

    def _pack(self):
        return [*self._header(), self.mass, self.damping]


@njit(cache=True, nogil=True)
def step_nb(p, x, u, out):
    h = p[0]
    nsub = int(p[1])
    mass = p[6]
    c = p[7]
    fx = min(max(u[0], p[2]), p[4])
    fy = min(max(u[1], p[3]), p[5])
    px, py, vx, vy = x[0], x[1], x[2], x[3]
    for _ in range(nsub):
        vx += (fx - c * vx) / mass * h
        vy += (fy - c * vy) / mass * h
        px += vx * h
        py += vy * h
    out[0] = px
    out[1] = py
    out[2] = vx
    out[3] = vy
