"""Multirate extended Kalman filter for planar and 1-D rigid bodies with joints.

State layout for ``Layout(pos_dim, att_dim, joint_dim)``::

    [position, attitude, linear velocity, angular velocity, joints, joint velocities]

IMU linear acceleration drives the prediction as a known input (specific
force, rotated by yaw when the body is planar with one attitude angle); the
gyro, pose and encoder readings are measurement updates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

__all__ = [
    "Layout",
    "FilterParams",
    "EkfState",
    "Pose",
    "Imu",
    "Encoders",
    "Measurement",
    "predict",
    "update",
    "run_multirate",
    "initial_state",
    "write_measurement_log",
    "read_measurement_log",
    "LOG_COLUMNS",
]


@dataclass(frozen=True)
class Layout:
    pos_dim: int = 2
    att_dim: int = 0
    joint_dim: int = 0

    def __post_init__(self):
        if self.pos_dim < 0 or self.att_dim < 0 or self.joint_dim < 0:
            raise ValueError("layout dimensions must be non-negative")
        if self.pos_dim + self.att_dim + self.joint_dim == 0:
            raise ValueError("layout must contain at least one coordinate")

    @property
    def config_dim(self) -> int:
        return self.pos_dim + self.att_dim

    @property
    def dim(self) -> int:
        return 2 * (self.pos_dim + self.att_dim + self.joint_dim)

    # index ranges into the state vector
    @property
    def pos(self) -> slice:
        return slice(0, self.pos_dim)

    @property
    def att(self) -> slice:
        return slice(self.pos_dim, self.config_dim)

    @property
    def vel(self) -> slice:
        c = self.config_dim
        return slice(c, c + self.pos_dim)

    @property
    def angvel(self) -> slice:
        c = self.config_dim
        return slice(c + self.pos_dim, 2 * c)

    @property
    def joints(self) -> slice:
        c = 2 * self.config_dim
        return slice(c, c + self.joint_dim)

    @property
    def jointvel(self) -> slice:
        c = 2 * self.config_dim + self.joint_dim
        return slice(c, c + self.joint_dim)

    @property
    def planar_yaw(self) -> bool:
        return self.pos_dim == 2 and self.att_dim == 1

    def labels(self) -> list[str]:
        p, a, j = self.pos_dim, self.att_dim, self.joint_dim
        return (
            [f"pos{i}" for i in range(p)]
            + [f"att{i}" for i in range(a)]
            + [f"vel{i}" for i in range(p)]
            + [f"angvel{i}" for i in range(a)]
            + [f"joint{i}" for i in range(j)]
            + [f"jointvel{i}" for i in range(j)]
        )


@dataclass(frozen=True)
class FilterParams:
    """Process-noise intensities (continuous white acceleration, per axis).

    ``accel_random_walk`` drives linear velocity when no IMU input is
    available; with IMU input, the IMU's own accelerometer covariance is used
    plus ``imu_residual`` to absorb model error.
    """

    layout: Layout = field(default_factory=Layout)
    accel_random_walk: float = 5.0
    imu_residual: float = 0.1
    angular_random_walk: float = 5.0
    joint_random_walk: float = 20.0
    gravity: tuple = ()

    def __post_init__(self):
        for name in ("accel_random_walk", "imu_residual", "angular_random_walk", "joint_random_walk"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        g = np.zeros(self.layout.pos_dim) if len(self.gravity) == 0 else np.asarray(self.gravity, dtype=float)
        if g.shape != (self.layout.pos_dim,):
            raise ValueError("gravity must have one entry per position axis")
        object.__setattr__(self, "gravity", tuple(float(v) for v in g))


@dataclass(frozen=True)
class EkfState:
    mean: np.ndarray
    covariance: np.ndarray
    timestamp: float = 0.0
    # out-of-order measurements dropped so far
    dropped: int = 0

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.covariance, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance must be {mean.size}x{mean.size}, got {cov.shape}")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)


def _as_cov(value, n: int, name: str) -> np.ndarray:
    c = np.asarray(value, dtype=float)
    if c.ndim == 0:
        c = np.full(n, float(c))
    if c.ndim == 1:
        if c.size != n:
            raise ValueError(f"{name} needs {n} variances, got {c.size}")
        c = np.diag(c)
    if c.shape != (n, n):
        raise ValueError(f"{name} must be {n}x{n}")
    if n and (not np.allclose(c, c.T) or np.any(np.linalg.eigvalsh(c) <= 0)):
        raise ValueError(f"{name} must be symmetric positive definite")
    return c


@dataclass(frozen=True)
class Pose:
    """Position and attitude; ``covariance`` is a matrix or a vector of variances."""

    timestamp: float
    position: np.ndarray
    attitude: np.ndarray = field(default_factory=lambda: np.zeros(0))
    covariance: object = 1e-4

    def __post_init__(self):
        pos = np.atleast_1d(np.asarray(self.position, dtype=float))
        att = np.atleast_1d(np.asarray(self.attitude, dtype=float))
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "attitude", att)
        object.__setattr__(self, "covariance", _as_cov(self.covariance, pos.size + att.size, "pose covariance"))


@dataclass(frozen=True)
class Imu:
    """Specific force (body frame) and body angular velocity."""

    timestamp: float
    linear_acceleration: np.ndarray
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(0))
    accel_covariance: object = 2.5e-3
    gyro_covariance: object = 1e-4

    def __post_init__(self):
        acc = np.atleast_1d(np.asarray(self.linear_acceleration, dtype=float))
        gyr = np.atleast_1d(np.asarray(self.angular_velocity, dtype=float))
        object.__setattr__(self, "linear_acceleration", acc)
        object.__setattr__(self, "angular_velocity", gyr)
        object.__setattr__(self, "accel_covariance", _as_cov(self.accel_covariance, acc.size, "accelerometer covariance"))
        object.__setattr__(self, "gyro_covariance", _as_cov(self.gyro_covariance, gyr.size, "gyro covariance"))


@dataclass(frozen=True)
class Encoders:
    timestamp: float
    joint_angles: np.ndarray
    joint_velocities: np.ndarray
    covariance: object = 1e-6

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.joint_angles, dtype=float))
        qd = np.atleast_1d(np.asarray(self.joint_velocities, dtype=float))
        if q.shape != qd.shape:
            raise ValueError("joint angles and velocities must have the same length")
        object.__setattr__(self, "joint_angles", q)
        object.__setattr__(self, "joint_velocities", qd)
        object.__setattr__(self, "covariance", _as_cov(self.covariance, 2 * q.size, "encoder covariance"))


Measurement = Union[Pose, Imu, Encoders]


def initial_state(layout: Layout, mean=None, std: float | Sequence = 1.0, timestamp: float = 0.0) -> EkfState:
    mean = np.zeros(layout.dim) if mean is None else np.asarray(mean, dtype=float)
    std = np.broadcast_to(np.asarray(std, dtype=float), (layout.dim,))
    return EkfState(mean, np.diag(std**2), timestamp)


def _symmetrize_checked(P: np.ndarray, what: str) -> np.ndarray:
    P = 0.5 * (P + P.T)
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        raise ValueError(f"covariance lost positive definiteness after {what}; check the noise tuning") from None
    return P


def _rotation(yaw: float) -> tuple[np.ndarray, np.ndarray]:
    c, s = math.cos(yaw), math.sin(yaw)
    R = np.array([[c, -s], [s, c]])
    dR = np.array([[-s, -c], [c, -s]])
    return R, dR


def _white_accel_block(q: float, dt: float) -> np.ndarray:
    return q * np.array([[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]])


def predict(ekf: EkfState, dt: float, imu: Imu | None, params: FilterParams) -> EkfState:
    """Propagate the filter by ``dt`` seconds.

    With ``imu`` the body is a constant-acceleration rigid body driven by the
    measured specific force; without it the model is constant velocity.
    """
    if not dt > 0 or not math.isfinite(dt):
        raise ValueError(f"predict needs a positive time step, got {dt}")
    L = params.layout
    n = L.dim
    if ekf.mean.size != n:
        raise ValueError(f"filter state has {ekf.mean.size} entries; layout expects {n}")
    x = ekf.mean.copy()
    F = np.eye(n)
    Q = np.zeros((n, n))
    p, a, j = L.pos_dim, L.att_dim, L.joint_dim
    pos, vel = np.arange(p), np.arange(p) + L.config_dim

    accel = np.zeros(p)
    if imu is not None:
        f = imu.linear_acceleration
        if f.size != p:
            raise ValueError(f"IMU acceleration has {f.size} axes; layout has {p}")
        if L.planar_yaw:
            R, dR = _rotation(x[L.att][0])
            accel = R @ f
            yaw = L.att.start
            # sensitivity of the rotated input to the yaw estimate
            F[pos, yaw] = 0.5 * dt * dt * (dR @ f)
            F[vel, yaw] = dt * (dR @ f)
            Ga = R
        else:
            accel = f.copy()
            Ga = np.eye(p)
        accel = accel + np.asarray(params.gravity)
        Sa = Ga @ imu.accel_covariance @ Ga.T
        G = np.zeros((n, p))
        G[pos] = 0.5 * dt * dt * np.eye(p)
        G[vel] = dt * np.eye(p)
        Q += G @ Sa @ G.T
        q_lin = params.imu_residual**2
    else:
        q_lin = params.accel_random_walk**2

    x[L.pos] += x[L.vel] * dt + 0.5 * accel * dt * dt
    x[L.vel] += accel * dt
    x[L.att] += x[L.angvel] * dt
    x[L.joints] += x[L.jointvel] * dt

    for i in range(p):
        F[pos[i], vel[i]] = dt
        Q[np.ix_([pos[i], vel[i]], [pos[i], vel[i]])] += _white_accel_block(q_lin, dt)
    for i in range(a):
        k, kd = L.att.start + i, L.angvel.start + i
        F[k, kd] = dt
        Q[np.ix_([k, kd], [k, kd])] += _white_accel_block(params.angular_random_walk**2, dt)
    for i in range(j):
        k, kd = L.joints.start + i, L.jointvel.start + i
        F[k, kd] = dt
        Q[np.ix_([k, kd], [k, kd])] += _white_accel_block(params.joint_random_walk**2, dt)

    P = F @ ekf.covariance @ F.T + Q
    P = _symmetrize_checked(P, "predict")
    return replace(ekf, mean=x, covariance=P, timestamp=ekf.timestamp + dt)


def _observation(z: Measurement, L: Layout) -> tuple[np.ndarray, np.ndarray, np.ndarray] | None:
    """Observed indices, measured values and noise covariance, or None if nothing is observed."""
    if isinstance(z, Pose):
        if z.position.size != L.pos_dim or z.attitude.size != L.att_dim:
            raise ValueError(f"pose has {z.position.size}+{z.attitude.size} values; layout expects {L.pos_dim}+{L.att_dim}")
        idx = np.r_[np.arange(L.pos.start, L.pos.stop), np.arange(L.att.start, L.att.stop)]
        return idx, np.r_[z.position, z.attitude], z.covariance
    if isinstance(z, Imu):
        if z.angular_velocity.size == 0:
            return None
        if z.angular_velocity.size != L.att_dim:
            raise ValueError(f"gyro has {z.angular_velocity.size} axes; layout expects {L.att_dim}")
        return np.arange(L.angvel.start, L.angvel.stop), z.angular_velocity, z.gyro_covariance
    if isinstance(z, Encoders):
        if z.joint_angles.size != L.joint_dim:
            raise ValueError(f"encoders report {z.joint_angles.size} joints; layout expects {L.joint_dim}")
        idx = np.r_[np.arange(L.joints.start, L.joints.stop), np.arange(L.jointvel.start, L.jointvel.stop)]
        return idx, np.r_[z.joint_angles, z.joint_velocities], z.covariance
    raise TypeError(f"unknown measurement type {type(z).__name__}")


def update(ekf: EkfState, z: Measurement, params: FilterParams) -> EkfState:
    """Joseph-form measurement update; stale measurements are dropped and counted."""
    if z.timestamp < ekf.timestamp:
        return replace(ekf, dropped=ekf.dropped + 1)
    obs = _observation(z, params.layout)
    if obs is None:
        return ekf
    idx, y, Rm = obs
    n = ekf.mean.size
    H = np.zeros((idx.size, n))
    H[np.arange(idx.size), idx] = 1.0
    P = ekf.covariance
    S = H @ P @ H.T + Rm
    try:
        K = np.linalg.solve(S, H @ P).T
    except np.linalg.LinAlgError:
        raise ValueError("innovation covariance is singular") from None
    if not np.all(np.isfinite(K)):
        raise ValueError("innovation covariance is singular")
    x = ekf.mean + K @ (y - ekf.mean[idx])
    A = np.eye(n) - K @ H
    P = A @ P @ A.T + K @ Rm @ K.T
    P = _symmetrize_checked(P, "update")
    return replace(ekf, mean=x, covariance=P)


def _advance(ekf: EkfState, t: float, imu: Imu | None, params: FilterParams) -> EkfState:
    dt = t - ekf.timestamp
    if dt > 1e-12:
        ekf = predict(ekf, dt, imu, params)
        ekf = replace(ekf, timestamp=t)
    return ekf


def run_multirate(
    ekf: EkfState,
    stream: Iterable[Measurement],
    params: FilterParams,
    tick: float = 0.002,
    use_imu: bool = True,
) -> list[EkfState]:
    """Filter a time-ordered measurement stream and emit an estimate every ``tick``.

    The most recent IMU sample is held as the acceleration input until the
    next one arrives. Estimates are emitted at ``t0 + k * tick`` up to the last
    measurement time; the first entry is the initial state.
    """
    stream = list(stream)
    for i in range(1, len(stream)):
        if stream[i].timestamp < stream[i - 1].timestamp:
            raise ValueError(
                f"measurement timestamps must be non-decreasing; index {i} "
                f"({stream[i].timestamp}) precedes index {i - 1} ({stream[i - 1].timestamp})"
            )
    if not tick > 0:
        raise ValueError("tick must be positive")
    out = [ekf]
    t0 = ekf.timestamp
    eps = 1e-9 * tick
    held: Imu | None = None
    i, k = 0, 1
    while i < len(stream):
        tk = t0 + k * tick
        while i < len(stream) and stream[i].timestamp <= tk + eps:
            z = stream[i]
            i += 1
            if z.timestamp < ekf.timestamp:
                ekf = replace(ekf, dropped=ekf.dropped + 1)
                continue
            ekf = _advance(ekf, z.timestamp, held, params)
            if isinstance(z, Imu):
                if not use_imu:
                    continue
                held = z
            ekf = update(ekf, z, params)
        ekf = _advance(ekf, tk, held, params)
        out.append(ekf)
        k += 1
    return out


# --- replay log --------------------------------------------------------------

# per-sensor meaning of the value columns v0..vN
LOG_COLUMNS = {
    "pose": "position (pos_dim) then attitude (att_dim)",
    "imu": "specific force (pos_dim) then angular velocity (att_dim)",
    "encoders": "joint angles (joint_dim) then joint velocities (joint_dim)",
}


def _log_width(layout: Layout) -> int:
    return max(layout.config_dim, 2 * layout.joint_dim, 1)


def write_measurement_log(path: str | Path, stream: Sequence[Measurement], layout: Layout) -> None:
    """Write ``timestamp_s,sensor_type,v0..vW`` rows; unused value cells are blank."""
    width = _log_width(layout)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp_s", "sensor_type"] + [f"v{i}" for i in range(width)])
        for z in stream:
            if isinstance(z, Pose):
                kind, vals = "pose", np.r_[z.position, z.attitude]
            elif isinstance(z, Imu):
                kind, vals = "imu", np.r_[z.linear_acceleration, z.angular_velocity]
            else:
                kind, vals = "encoders", np.r_[z.joint_angles, z.joint_velocities]
            cells = [repr(float(v)) for v in vals] + [""] * (width - vals.size)
            w.writerow([repr(float(z.timestamp)), kind] + cells)


def read_measurement_log(
    path: str | Path,
    layout: Layout,
    pose_cov=1e-4,
    accel_cov=2.5e-3,
    gyro_cov=1e-4,
    encoder_cov=1e-6,
) -> list[Measurement]:
    """Parse a replay log written by :func:`write_measurement_log`."""
    p, a, j = layout.pos_dim, layout.att_dim, layout.joint_dim
    out: list[Measurement] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["timestamp_s", "sensor_type"]:
            raise ValueError(f"{path}: not a measurement log (bad header)")
        for line, row in enumerate(reader, start=2):
            t, kind = float(row[0]), row[1]
            vals = np.array([float(v) for v in row[2:] if v != ""])
            if kind == "pose":
                expected = p + a
            elif kind == "imu":
                expected = p + a
            elif kind == "encoders":
                expected = 2 * j
            else:
                raise ValueError(f"{path}:{line}: unknown sensor type {kind!r}")
            if vals.size != expected:
                raise ValueError(f"{path}:{line}: {kind} row has {vals.size} values, expected {expected}")
            if kind == "pose":
                out.append(Pose(t, vals[:p], vals[p:], pose_cov))
            elif kind == "imu":
                out.append(Imu(t, vals[:p], vals[p:], accel_cov, gyro_cov))
            else:
                out.append(Encoders(t, vals[:j], vals[j:], encoder_cov))
    return out
