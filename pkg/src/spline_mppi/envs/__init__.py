from .base import CompiledEnv, EnvModel
from .cartpole import CartPole
from .double_integrator import DoubleIntegrator
from .hopper import Hopper
from .primitives import (
    ContactParams,
    GaitParams,
    PDParams,
    contact_force,
    gait_reference,
    pd_torque,
    regularized_friction,
    swing_mask,
)
from .pusher import PlanarPusher

ENVIRONMENTS = {
    "double_integrator": DoubleIntegrator,
    "cartpole": CartPole,
    "pusher": PlanarPusher,
    "hopper": Hopper,
}

__all__ = [
    "EnvModel",
    "CompiledEnv",
    "DoubleIntegrator",
    "CartPole",
    "PlanarPusher",
    "Hopper",
    "PDParams",
    "ContactParams",
    "GaitParams",
    "pd_torque",
    "contact_force",
    "regularized_friction",
    "gait_reference",
    "swing_mask",
    "ENVIRONMENTS",
]
