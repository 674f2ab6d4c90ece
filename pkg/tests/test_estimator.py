from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spline_mppi.config import load_preset
from spline_mppi.estimator import (
    EkfState,
    Encoders,
    FilterParams,
    Imu,
    Layout,
    Pose,
    initial_state,
    predict,
    read_measurement_log,
    run_multirate,
    update,
    write_measurement_log,
)
from spline_mppi.harness import generate_synthetic_log, replay, simulate_measurements

PLANAR = Layout(2, 0, 0)
PARAMS = FilterParams(layout=PLANAR)


def assert_valid_cov(ekf: EkfState):
    P = ekf.covariance
    assert np.max(np.abs(P - P.T)) <= 1e-10
    assert np.all(np.linalg.eigvalsh(P) > 0)


def di_config(**estimator):
    cfg = load_preset("double_integrator")
    for k, v in estimator.items():
        setattr(cfg.estimator, k, v)
    return cfg


def estimates_at(states, times):
    """Filter means at the given tick times (estimates are emitted on the same grid)."""
    by_t = {round(s.timestamp, 9): s.mean for s in states}
    return np.array([by_t[round(t, 9)] for t in times])


def rmse(a, b):
    return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1))))


# predict


def test_layout_slices_and_labels():
    L = Layout(2, 1, 2)
    assert L.dim == 2 * (2 + 1 + 2)
    assert L.labels() == [
        "pos0", "pos1", "att0", "vel0", "vel1", "angvel0", "joint0", "joint1", "jointvel0", "jointvel1",
    ]
    assert L.planar_yaw and not PLANAR.planar_yaw


def test_tiny_step_changes_almost_nothing():
    ekf = initial_state(PLANAR, [0.3, -0.2, 1.5, -2.0], std=0.1)
    out = predict(ekf, 1e-9, None, PARAMS)
    np.testing.assert_allclose(out.mean, ekf.mean, atol=1e-8, rtol=0)
    growth = np.abs(out.covariance - ekf.covariance).max()
    assert growth <= 1e-8 * PARAMS.accel_random_walk**2


def test_diffusion_at_rest():
    ekf = initial_state(PLANAR, np.zeros(4), std=0.01)
    zero = Imu(0.0, [0.0, 0.0])
    traces = [np.trace(ekf.covariance)]
    for _ in range(100):
        ekf = predict(ekf, 0.002, zero, PARAMS)
        traces.append(np.trace(ekf.covariance))
        assert_valid_cov(ekf)
    assert np.array_equal(ekf.mean, np.zeros(4))
    assert np.all(np.diff(traces) > 0)


def test_constant_acceleration_kinematics():
    ekf = initial_state(PLANAR, np.zeros(4), std=0.01)
    imu = Imu(0.0, [1.0, 0.0])
    for _ in range(500):
        ekf = predict(ekf, 1 / 500, imu, PARAMS)
    assert ekf.mean[2] == pytest.approx(1.0, abs=1e-3)
    assert ekf.mean[0] == pytest.approx(0.5, abs=1e-3)
    assert ekf.timestamp == pytest.approx(1.0)


def test_gravity_is_added_to_specific_force():
    L = Layout(1, 0, 0)
    p = FilterParams(layout=L, gravity=(-9.81,))
    ekf = initial_state(L, [1.0, 0.0], std=0.01)
    # a body at rest on the ground reads +g
    out = predict(ekf, 0.01, Imu(0.0, [9.81]), p)
    np.testing.assert_allclose(out.mean, [1.0, 0.0], atol=1e-15)
    falling = predict(ekf, 0.01, Imu(0.0, [0.0]), p)
    assert falling.mean[1] == pytest.approx(-0.0981)


def test_yaw_rotates_body_frame_acceleration():
    L = Layout(2, 1, 0)
    p = FilterParams(layout=L)
    ekf = initial_state(L, [0, 0, math.pi / 2, 0, 0, 0], std=1e-3)
    for _ in range(100):
        ekf = predict(ekf, 0.01, Imu(0.0, [1.0, 0.0], [0.0]), p)
        assert_valid_cov(ekf)
    # forward in the body frame is +y in the world when facing +90 degrees
    assert ekf.mean[4] == pytest.approx(1.0, abs=1e-9)
    assert abs(ekf.mean[3]) < 1e-9


def test_predict_rejects_bad_inputs():
    ekf = initial_state(PLANAR)
    with pytest.raises(ValueError):
        predict(ekf, 0.0, None, PARAMS)
    with pytest.raises(ValueError):
        predict(ekf, 0.01, Imu(0.0, [1.0, 0.0, 0.0]), PARAMS)
    with pytest.raises(ValueError):
        predict(initial_state(Layout(1, 0, 0)), 0.01, None, PARAMS)


def test_non_pd_covariance_is_reported():
    ekf = EkfState(np.zeros(4), -np.eye(4))
    with pytest.raises(ValueError, match="positive definite"):
        predict(ekf, 0.01, None, PARAMS)


# update


def test_zero_innovation_keeps_mean_and_shrinks_observed_block():
    ekf = initial_state(PLANAR, [0.4, -0.3, 0.1, 0.2], std=0.1)
    out = update(ekf, Pose(0.0, [0.4, -0.3], covariance=1e-4), PARAMS)
    np.testing.assert_array_equal(out.mean, ekf.mean)
    assert np.trace(out.covariance[:2, :2]) < np.trace(ekf.covariance[:2, :2])
    assert_valid_cov(out)


def test_perfect_sensor_pins_position():
    ekf = initial_state(PLANAR, [0.0, 0.0, 0.0, 0.0], std=1.0)
    out = update(ekf, Pose(0.0, [0.7, -1.2], covariance=1e-12), PARAMS)
    np.testing.assert_allclose(out.mean[:2], [0.7, -1.2], atol=1e-6)
    assert_valid_cov(out)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-2, 2), min_size=4, max_size=4),
    st.lists(st.floats(-2, 2), min_size=2, max_size=2),
    st.floats(1e-8, 1.0),
)
def test_update_never_grows_observed_uncertainty(mean, z, r):
    rng = np.random.default_rng(0)
    A = rng.normal(size=(4, 4))
    ekf = EkfState(np.array(mean), A @ A.T + 0.1 * np.eye(4))
    out = update(ekf, Pose(0.0, z, covariance=r), PARAMS)
    assert np.trace(out.covariance[:2, :2]) <= np.trace(ekf.covariance[:2, :2]) + 1e-12
    assert_valid_cov(out)


def test_encoders_and_gyro_observe_their_blocks():
    L = Layout(1, 1, 1)
    p = FilterParams(layout=L)
    ekf = initial_state(L, np.zeros(L.dim), std=1.0)
    ekf = update(ekf, Encoders(0.0, [0.3], [-0.5], covariance=1e-10), p)
    ekf = update(ekf, Imu(0.0, [0.0], [2.0], gyro_covariance=1e-10), p)
    assert ekf.mean[L.joints][0] == pytest.approx(0.3, abs=1e-6)
    assert ekf.mean[L.jointvel][0] == pytest.approx(-0.5, abs=1e-6)
    assert ekf.mean[L.angvel][0] == pytest.approx(2.0, abs=1e-6)


def test_stale_measurement_is_dropped_and_counted():
    ekf = initial_state(PLANAR, np.zeros(4), timestamp=1.0)
    out = update(ekf, Pose(0.5, [1.0, 1.0]), PARAMS)
    assert out.dropped == 1 and np.array_equal(out.mean, ekf.mean)


@pytest.mark.parametrize(
    "make",
    [
        lambda: Pose(0.0, [0.0, 0.0], covariance=[1e-4, -1e-4]),
        lambda: Pose(0.0, [0.0, 0.0], covariance=[[1.0, 2.0], [2.0, 1.0]]),
        lambda: Imu(0.0, [0.0], accel_covariance=0.0),
        lambda: Encoders(0.0, [0.0, 1.0], [0.0]),
    ],
)
def test_measurement_validation(make):
    with pytest.raises(ValueError):
        make()


def test_state_is_immutable():
    ekf = initial_state(PLANAR)
    with pytest.raises(ValueError):
        ekf.mean[0] = 1.0


# run_multirate


def test_empty_stream_returns_initial_state():
    ekf = initial_state(PLANAR)
    assert run_multirate(ekf, [], PARAMS) == [ekf]


def test_non_monotonic_stream_names_index():
    stream = [Pose(0.01, [0, 0]), Pose(0.02, [0, 0]), Pose(0.015, [0, 0])]
    with pytest.raises(ValueError, match="index 2"):
        run_multirate(initial_state(PLANAR), stream, PARAMS)


def test_emits_one_estimate_per_tick():
    stream = [Pose(0.01 * k, [0.0, 0.0]) for k in range(1, 11)]
    out = run_multirate(initial_state(PLANAR), stream, PARAMS, tick=0.002)
    np.testing.assert_allclose([s.timestamp for s in out], np.arange(51) * 0.002, atol=1e-12)
    for s in out:
        assert_valid_cov(s)


def test_deterministic_given_stream():
    cfg = di_config()
    stream, *_ = simulate_measurements(cfg, duration=1.0, seed=3)
    a = replay(cfg, stream)
    b = replay(cfg, stream)
    assert all(np.array_equal(x.mean, y.mean) and np.array_equal(x.covariance, y.covariance) for x, y in zip(a, b))


def test_pose_only_stream_converges_to_measured_poses():
    cfg = di_config()
    stream, times, truth, bridge = simulate_measurements(cfg, duration=4.0, seed=1)
    poses = [z for z in stream if isinstance(z, Pose)]
    ekf = initial_state(bridge.layout, truth[0] + [0.2, -0.2, 0.0, 0.0], std=0.5)
    est = run_multirate(ekf, poses, FilterParams(layout=bridge.layout), use_imu=False)
    late = [z for z in poses if z.timestamp > 1.0]
    z = np.array([p.position for p in late])
    e = estimates_at(est, [p.timestamp for p in late])[:, :2]
    t = truth[[int(round(p.timestamp / 0.002)) for p in late], :2]
    assert np.all(np.abs(np.mean(e - z, axis=0)) < 0.002)  # the 0.2 m offset is gone
    assert rmse(e, t) <= rmse(z, t)  # and the filter is no worse than the raw sensor


@pytest.fixture(scope="module")
def synthetic_run():
    cfg = di_config()
    stream, times, truth, bridge = simulate_measurements(cfg, duration=10.0, seed=0)
    full = replay(cfg, stream, use_imu=True)
    pose_only = replay(cfg, [z for z in stream if isinstance(z, Pose)], use_imu=False)
    return times, truth, full, pose_only


def test_multirate_position_rmse_below_ten_mm(synthetic_run):
    times, truth, full, _ = synthetic_run
    assert rmse(estimates_at(full, times)[:, :2], truth[:, :2]) < 0.010


def test_imu_fusion_improves_velocity(synthetic_run):
    times, truth, full, pose_only = synthetic_run
    v_full = rmse(estimates_at(full, times)[:, 2:], truth[:, 2:])
    v_pose = rmse(estimates_at(pose_only, times)[:, 2:], truth[:, 2:])
    assert v_full < v_pose


def test_hopper_layout_with_gravity_and_encoders():
    cfg = load_preset("hopper")
    stream, times, truth, bridge = simulate_measurements(cfg, duration=3.0, seed=0)
    assert bridge.layout == Layout(1, 0, 1)
    est = replay(cfg, stream)
    assert rmse(estimates_at(est, times)[:, :1], truth[:, :1]) < 0.010


# replay log


def test_log_round_trip(tmp_path):
    layout = Layout(1, 1, 1)
    stream = [
        Pose(0.0, [0.1], [0.2]),
        Imu(0.002, [9.7], [0.01]),
        Encoders(0.002, [0.3], [-0.1]),
        Pose(0.01, [1 / 3], [-0.25]),
    ]
    path = tmp_path / "log.csv"
    write_measurement_log(path, stream, layout)
    back = read_measurement_log(path, layout)
    assert [type(z) for z in back] == [type(z) for z in stream]
    for a, b in zip(stream, back):
        assert a.timestamp == b.timestamp
        for f in ("position", "attitude", "linear_acceleration", "angular_velocity", "joint_angles", "joint_velocities"):
            if hasattr(a, f):
                assert np.array_equal(getattr(a, f), getattr(b, f))


def test_log_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("time,kind\n0,pose\n")
    with pytest.raises(ValueError):
        read_measurement_log(path, PLANAR)


def test_zero_noise_log_matches_ground_truth(tmp_path):
    cfg = di_config(pose_noise=0.0, imu_noise=0.0)
    meas, truth_path = generate_synthetic_log(cfg, tmp_path, duration=1.0, seed=0)
    truth = {}
    with open(truth_path) as fh:
        for row in csv.DictReader(fh):
            truth[round(float(row["timestamp_s"]), 9)] = (float(row["pos0"]), float(row["pos1"]))
    poses = [z for z in read_measurement_log(meas, PLANAR) if isinstance(z, Pose)]
    assert len(poses) == 100
    for z in poses:
        assert tuple(z.position) == truth[round(z.timestamp, 9)]


def test_imu_rows_outnumber_pose_rows_five_to_one(tmp_path):
    meas, _ = generate_synthetic_log(di_config(), tmp_path, duration=2.0, seed=0)
    with open(meas) as fh:
        kinds = [row["sensor_type"] for row in csv.DictReader(fh)]
    assert kinds.count("imu") == 5 * kinds.count("pose") == 1000
