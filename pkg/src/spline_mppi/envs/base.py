from __future__ import annotations

import dataclasses

import numpy as np


class EnvModel:
    """Dynamics contract used by the planner and the rollout engine.

    Subclasses provide ``state_dim``, ``control_dim``, ``lower``/``upper``
    control bounds, ``sim_dt`` (one control step) and ``step``. Built-in
    environments also set ``kind`` to the id of their compiled step kernel so
    the rollout engine can run them without the interpreter; a subclass that
    leaves ``kind = None`` is rolled out through ``step`` in Python.

    ``step`` must be a pure function of ``(state, target)``.
    """

    name: str = "env"
    kind: int | None = None
    state_labels: tuple[str, ...] = ()
    # indices of the planar box position inside the state, if any
    box_index: tuple[int, int] | None = None

    state_dim: int
    control_dim: int
    sim_dt: float

    @property
    def lower(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def upper(self) -> np.ndarray:
        raise NotImplementedError

    def step(self, state: np.ndarray, target: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def initial_state(self) -> np.ndarray:
        return np.zeros(self.state_dim)

    def hold_control(self, state: np.ndarray) -> np.ndarray:
        """Control that holds the current configuration (zero force by default)."""
        return np.zeros(self.control_dim)

    def nominal_control(self) -> np.ndarray:
        return np.clip(np.zeros(self.control_dim), self.lower, self.upper)

    def clip_control(self, u) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.lower, self.upper)

    def clone_for_evaluation(self) -> "EnvModel":
        """Independent instance for one rollout worker."""
        if dataclasses.is_dataclass(self):
            return dataclasses.replace(self)
        import copy

        return copy.deepcopy(self)

    def params(self) -> np.ndarray:
        """Flat float64 parameter block consumed by the compiled kernel."""
        raise NotImplementedError(f"{type(self).__name__} has no compiled kernel")

    def _check_inputs(self, state, target):
        state = np.asarray(state, dtype=float)
        target = np.asarray(target, dtype=float)
        if state.shape != (self.state_dim,):
            raise ValueError(f"{self.name}: state must have shape ({self.state_dim},), got {state.shape}")
        if target.shape != (self.control_dim,):
            raise ValueError(f"{self.name}: control must have shape ({self.control_dim},), got {target.shape}")
        if not np.all(np.isfinite(state)):
            raise ValueError(f"{self.name}: non-finite state {state}")
        if not np.all(np.isfinite(target)):
            raise ValueError(f"{self.name}: non-finite control {target}")
        return state, target


class CompiledEnv(EnvModel):
    """Environment whose step runs through the shared numba dispatch."""

    substeps: int

    def __post_init__(self):
        if not self.sim_dt > 0:
            raise ValueError("sim_dt must be positive")
        if int(self.substeps) < 1:
            raise ValueError("substeps must be >= 1")
        if not np.all(self.lower < self.upper):
            raise ValueError("control bounds need lower < upper")
        object.__setattr__(self, "_packed", None)

    def params(self) -> np.ndarray:
        packed = self.__dict__.get("_packed")
        if packed is None:
            packed = np.ascontiguousarray(self._pack(), dtype=np.float64)
            packed.setflags(write=False)
            object.__setattr__(self, "_packed", packed)
        return packed

    def _pack(self) -> list[float]:
        raise NotImplementedError

    def _header(self) -> list[float]:
        return [self.sim_dt / self.substeps, float(self.substeps), *self.lower, *self.upper]

    def step(self, state, target):
        from .kernels import step_once

        state, target = self._check_inputs(state, target)
        return step_once(self.kind, self.params(), state, target)
