"""Integer dispatch over the compiled environment step functions.

Dispatch is a plain branch rather than a function argument: numba cannot
cache functions that receive other jitted functions as arguments, and the
compile would otherwise be paid on every process start.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from . import cartpole, double_integrator, hopper, pusher


@njit(cache=True, nogil=True)
def dispatch_step(kind, p, x, u, out):
    if kind == 0:
        double_integrator.step_nb(p, x, u, out)
    elif kind == 1:
        cartpole.step_nb(p, x, u, out)
    elif kind == 2:
        pusher.step_nb(p, x, u, out)
    elif kind == 3:
        hopper.step_nb(p, x, u, out)
    else:
        raise ValueError("unknown environment kind")


def step_once(kind: int, params: np.ndarray, state: np.ndarray, target: np.ndarray) -> np.ndarray:
    out = np.empty_like(state)
    dispatch_step(kind, params, np.ascontiguousarray(state), np.ascontiguousarray(target), out)
    return out
