"""Task configuration: typed dataclasses loaded strictly from YAML.

Unknown keys are errors, reported with their dotted path, so a typo in an
ablation config cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import types
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import yaml

from .costs import BoxCostSpec, BoxPushCost, CostSpec, TrackingCost, TrackingCostSpec
from .envs import ENVIRONMENTS, EnvModel, GaitParams
from .mppi import PlannerConfig
from .spline import Order

__all__ = [
    "ConfigError",
    "CostConfig",
    "BoxConfig",
    "SuccessConfig",
    "EpisodeConfig",
    "EstimatorConfig",
    "EnvConfig",
    "TaskConfig",
    "load_config",
    "load_preset",
    "preset_names",
    "from_dict",
    "to_dict",
    "config_hash",
    "flatten",
]


class ConfigError(ValueError):
    """Invalid configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path or '<root>'}: {message}")


@dataclass
class EnvConfig:
    name: str = "double_integrator"
    params: dict = field(default_factory=dict)


@dataclass
class BoxConfig:
    q_box: float = 10.0
    box_target: list = field(default_factory=lambda: [2.0, 0.0])
    goal_tolerance: float = 0.3


@dataclass
class CostConfig:
    q_diag: list = field(default_factory=list)
    r_diag: list = field(default_factory=list)
    x_ref: list = field(default_factory=list)
    # constant control reference; ignored when ``gait`` is set
    u_ref: Optional[list] = None
    gait: Optional[GaitParams] = None
    terminal_weight: float = 1.0
    box: Optional[BoxConfig] = None
    robot_goal_at_box: bool = True


@dataclass
class SuccessConfig:
    # "state": |x[indices] - target| < tolerance; "box": box within goal tolerance;
    # "none": success means the episode did not diverge
    kind: str = "none"
    indices: list = field(default_factory=list)
    target: Optional[list] = None
    tolerance: float = 0.05
    # seconds the condition must hold continuously; 0 means a single step suffices
    hold_time: float = 0.0


@dataclass
class EpisodeConfig:
    duration: float = 3.0
    initial_state: Optional[list] = None
    stop_on_success: bool = False
    success: SuccessConfig = field(default_factory=SuccessConfig)


@dataclass
class EstimatorConfig:
    enabled: bool = False
    pose_rate: float = 100.0
    imu_rate: float = 500.0
    encoder_rate: float = 500.0
    pose_noise: float = 0.005
    attitude_noise: float = 0.005
    imu_noise: float = 0.05
    gyro_noise: float = 0.01
    encoder_noise: float = 0.001
    encoder_rate_noise: float = 0.01
    use_imu: bool = True
    # white-acceleration intensity when the filter runs without IMU input
    accel_random_walk: float = 5.0
    noise_seed: int = 12345


@dataclass
class TaskConfig:
    task: str = "double_integrator"
    env: EnvConfig = field(default_factory=EnvConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    cost: CostConfig = field(default_factory=CostConfig)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    workers: int = 1

    # --- resolution -------------------------------------------------------
    def build_env(self) -> EnvModel:
        try:
            cls = ENVIRONMENTS[self.env.name]
        except KeyError:
            raise ConfigError("env.name", f"unknown environment {self.env.name!r}; choose from {sorted(ENVIRONMENTS)}")
        if "sim_dt" in self.env.params:
            raise ConfigError("env.params.sim_dt", "set the step size through planner.sim_dt")
        params = from_dict(cls, dict(self.env.params), "env.params", skip=("sim_dt",))
        try:
            return dataclasses.replace(params, sim_dt=self.planner.sim_dt)
        except ValueError as exc:
            raise ConfigError("env.params", str(exc)) from exc

    def build_cost(self, env: EnvModel) -> CostSpec:
        c = self.cost
        sizes = {"q_diag": env.state_dim, "x_ref": env.state_dim, "r_diag": env.control_dim}
        if c.gait is None and c.u_ref is not None:
            sizes["u_ref"] = env.control_dim
        for name, n in sizes.items():
            if len(getattr(c, name)) != n:
                raise ConfigError(f"cost.{name}", f"expected {n} entries for {env.name}")
        try:
            u_ref = c.gait if c.gait is not None else c.u_ref
            if u_ref is None:
                u_ref = env.nominal_control()
            tracking = TrackingCostSpec(c.q_diag, c.r_diag, c.x_ref, u_ref, c.terminal_weight)
        except ValueError as exc:
            raise ConfigError("cost", str(exc)) from exc
        if c.box is None:
            return TrackingCost(tracking)
        if env.box_index is None:
            raise ConfigError("cost.box", f"environment {env.name} has no box")
        try:
            box = BoxCostSpec(c.box.q_box, tuple(c.box.box_target), c.box.goal_tolerance)
        except ValueError as exc:
            raise ConfigError("cost.box", str(exc)) from exc
        return BoxPushCost(tracking, box, box_index=tuple(env.box_index))

    def validate(self) -> "TaskConfig":
        env = self.build_env()
        self.build_cost(env)
        if self.episode.duration <= 0:
            raise ConfigError("episode.duration", "must be positive")
        if self.episode.initial_state is not None and len(self.episode.initial_state) != env.state_dim:
            raise ConfigError("episode.initial_state", f"expected {env.state_dim} entries")
        s = self.episode.success
        if s.kind not in ("state", "box", "none"):
            raise ConfigError("episode.success.kind", f"unknown success kind {s.kind!r}")
        if s.kind == "box" and self.cost.box is None:
            raise ConfigError("episode.success.kind", "box success needs cost.box")
        if s.kind == "state":
            if not s.indices or max(s.indices) >= env.state_dim:
                raise ConfigError("episode.success.indices", "indices must be non-empty and inside the state")
        if self.planner.noise_scale is not None and len(self.planner.noise_scale) not in (1, env.control_dim):
            raise ConfigError("planner.noise_scale", f"expected {env.control_dim} entries")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        return self


# --- strict dict <-> dataclass ------------------------------------------------


def _is_optional(tp) -> tuple[bool, Any]:
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) < len(typing.get_args(tp)):
            return True, args[0] if len(args) == 1 else Union[tuple(args)]
    return False, tp


def _coerce(tp, value, path: str):
    optional, inner = _is_optional(tp)
    if value is None:
        if optional:
            return None
        raise ConfigError(path, "may not be null")
    tp = inner
    if isinstance(tp, str):
        raise ConfigError(path, f"unresolved annotation {tp}")
    if dataclasses.is_dataclass(tp):
        if dataclasses.is_dataclass(value):
            return value
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected a mapping, got {type(value).__name__}")
        return from_dict(tp, value, path)
    origin = typing.get_origin(tp)
    if origin in (Union, types.UnionType):
        for arg in typing.get_args(tp):
            try:
                return _coerce(arg, value, path)
            except ConfigError:
                continue
        raise ConfigError(path, f"value {value!r} does not match {tp}")
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        try:
            return Order.parse(value) if tp is Order else tp(value)
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from exc
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return int(value)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float, np.number)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if tp in (list, tuple) or origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        return tuple(value) if (tp is tuple or origin is tuple) else list(value)
    if tp is dict or origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected a mapping, got {value!r}")
        return dict(value)
    return value


def from_dict(cls, data: dict, path: str = "", skip: tuple = ()):
    """Build dataclass ``cls`` from ``data``, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ConfigError(path, f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init and f.name not in skip}
    unknown = sorted(set(data) - names)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError(where, f"unknown key (valid keys: {', '.join(sorted(names))})")
    kwargs = {}
    for name, value in data.items():
        sub = f"{path}.{name}" if path else name
        kwargs[name] = _coerce(hints[name], value, sub)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def to_dict(obj) -> Any:
    """Plain-data view of a config (enums by value, tuples as lists)."""
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.init}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {k: to_dict(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def flatten(obj, prefix: str = "") -> dict:
    """Dotted-path view of a config, used to audit sweep overrides."""
    data = to_dict(obj) if not isinstance(obj, dict) else obj
    out = {}
    for k, v in data.items():
        key = f"{prefix}.{k}" if prefix else k
        if isinstance(v, dict) and v:
            out.update(flatten(v, key))
        else:
            out[key] = v
    return out


# fields that change how a run is executed but never its results
_HASH_EXCLUDE = ("workers",)


def config_hash(cfg: TaskConfig) -> str:
    data = {k: v for k, v in to_dict(cfg).items() if k not in _HASH_EXCLUDE}
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(source: str | Path | dict) -> TaskConfig:
    """Load and validate a task config from a YAML path or an already-parsed dict."""
    if isinstance(source, dict):
        data = source
    else:
        text = Path(source).read_text()
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError("", f"cannot parse {source}: {exc}") from exc
    if data is None:
        data = {}
    return from_dict(TaskConfig, data).validate()


def preset_names() -> list[str]:
    root = resources.files("spline_mppi") / "presets"
    return sorted(p.name[: -len(".yaml")] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> TaskConfig:
    path = resources.files("spline_mppi") / "presets" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError("task", f"unknown task preset {name!r}; available: {preset_names()}")
    return load_config(yaml.safe_load(path.read_text()))
