from __future__ import annotations

import numpy as np
import pytest

from spline_mppi.costs import BoxCostSpec, BoxPushCost, TrackingCost, TrackingCostSpec, step_cost
from spline_mppi.envs import DoubleIntegrator, EnvModel, Hopper, PlanarPusher
from spline_mppi.rollout import DIVERGENCE_COST, RolloutEngine, rollout, rollout_batch


def tracking(env, q=None, r=None, x_ref=None, u_ref=None):
    d, m = env.state_dim, env.control_dim
    return TrackingCost(
        TrackingCostSpec(
            q_diag=np.zeros(d) if q is None else q,
            r_diag=np.zeros(m) if r is None else r,
            x_ref=np.zeros(d) if x_ref is None else x_ref,
            u_ref=u_ref,
        )
    )


class NumpyDoubleIntegrator(EnvModel):
    """Interpreted twin of the compiled double integrator, written independently."""

    name = "numpy_di"
    state_dim, control_dim, sim_dt = 4, 2, 0.01

    def __init__(self, substeps=5, limit=2.0, blow_up_after=None):
        self.substeps, self.limit, self.blow_up_after = substeps, limit, blow_up_after

    @property
    def lower(self):
        return np.full(2, -self.limit)

    @property
    def upper(self):
        return np.full(2, self.limit)

    def step(self, state, target):
        p, v = np.array(state[:2]), np.array(state[2:])
        f = np.clip(target, -self.limit, self.limit)
        h = self.sim_dt / self.substeps
        for _ in range(self.substeps):
            v = v + f * h
            p = p + v * h
        if self.blow_up_after is not None and p[0] > self.blow_up_after:
            p[0] = np.inf
        return np.concatenate([p, v])


def test_equilibrium_at_rest():
    env = DoubleIntegrator()
    x0 = np.array([0.3, -0.2, 0.0, 0.0])
    res = rollout(env, x0, np.zeros((20, 2)), tracking(env))
    assert np.array_equal(res.states, np.tile(x0, (21, 1)))
    assert res.total_cost == 0.0 and not res.diverged and res.steps_completed == 20


def test_constant_force_matches_hand_integration():
    env = DoubleIntegrator(sim_dt=0.01, substeps=5)
    res = rollout(env, np.zeros(4), np.tile([1.0, 0.0], (3, 1)), tracking(env))
    h = 0.002
    for i in range(1, 4):
        n = 5 * i  # substeps taken so far; v_k = k h, x_n = h^2 n (n + 1) / 2
        assert res.states[i, 0] == pytest.approx(h * h * n * (n + 1) / 2, rel=1e-12)
        assert res.states[i, 2] == pytest.approx(n * h, rel=1e-12)
    assert res.states[3, 0] == pytest.approx(0.5 * 0.03**2, rel=0.07)  # continuous-time limit


def test_constant_cost_accumulates():
    env = DoubleIntegrator()
    cost = tracking(env, r=[1.0, 0.0], u_ref=[1.0, 0.0])
    res = rollout(env, np.zeros(4), np.zeros((40, 2)), cost)
    assert res.total_cost == 40.0
    assert np.array_equal(res.step_costs, np.ones(40))


def test_total_is_sum_of_step_costs():
    env = PlanarPusher()
    rng = np.random.default_rng(3)
    cost = BoxPushCost(
        TrackingCostSpec(q_diag=rng.uniform(0, 2, 10), r_diag=[0.01, 0.01], x_ref=rng.normal(size=10)),
        BoxCostSpec(q_box=10.0, box_target=(2.0, 0.0)),
    )
    res = rollout(env, env.initial_state(), rng.uniform(-60, 60, (30, 2)), cost)
    assert res.total_cost == pytest.approx(res.step_costs.sum(), rel=1e-12)
    assert np.array_equal(res.states[0], env.initial_state())


def test_compiled_path_matches_interpreted_twin():
    rng = np.random.default_rng(0)
    controls = rng.uniform(-3, 3, (5, 25, 2))
    fast, slow = DoubleIntegrator(), NumpyDoubleIntegrator()
    cost = tracking(fast, q=[1.0, 2.0, 0.1, 0.1], r=[0.01, 0.02], x_ref=[1.0, -1.0, 0, 0], u_ref=[0.5, 0.0])
    a = rollout_batch(fast, np.zeros(4), controls, cost)
    b = rollout_batch(slow, np.zeros(4), controls, cost)
    for ra, rb in zip(a, b):
        np.testing.assert_allclose(ra.states, rb.states, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(ra.step_costs, rb.step_costs, rtol=1e-12, atol=1e-14)


def test_step_costs_match_python_reference():
    env = PlanarPusher()
    rng = np.random.default_rng(5)
    spec = TrackingCostSpec(q_diag=rng.uniform(0, 1, 10), r_diag=[0.1, 0.2], x_ref=rng.normal(size=10))
    spec = type(spec)(spec.q_diag, spec.r_diag, spec.x_ref, terminal_weight=3.0)
    cost = BoxPushCost(spec, BoxCostSpec(q_box=2.0, box_target=(1.5, 0.3)))
    controls = rng.uniform(-60, 60, (12, 2))
    res = rollout(env, env.initial_state(), controls, cost, t0=0.4)
    for i in range(12):
        ref = step_cost(res.states[i + 1], controls[i], 0.4 + i * env.sim_dt, cost, final=i == 11)
        assert res.step_costs[i] == pytest.approx(ref, rel=1e-12, abs=1e-14)


def test_batch_of_one_equals_single_rollout():
    env = Hopper()
    controls = np.random.default_rng(1).uniform(0.15, 0.45, (40, 1))
    cost = tracking(env, q=[1.0, 0.0, 0.1, 0.0], x_ref=[0.35, 0, 0, 0])
    single = rollout(env, env.initial_state(), controls, cost)
    (batch,) = rollout_batch(env, env.initial_state(), controls[None], cost)
    assert np.array_equal(single.states, batch.states) and single.total_cost == batch.total_cost


@pytest.mark.parametrize("env", [DoubleIntegrator(), PlanarPusher(), Hopper()], ids=lambda e: e.name)
def test_worker_count_is_bitwise_invariant(env):
    rng = np.random.default_rng(7)
    controls = rng.uniform(env.lower, env.upper, (30, 40, env.control_dim))
    cost = tracking(env, q=np.ones(env.state_dim), r=np.full(env.control_dim, 0.01))
    x0 = env.initial_state()
    with RolloutEngine(env, workers=1) as e1:
        ref = e1.evaluate(x0, controls, cost)
        ref_states, ref_totals = ref.states.copy(), ref.totals.copy()
    for w in (2, 3, 8):
        with RolloutEngine(env, workers=w) as ew:
            out = ew.evaluate(x0, controls, cost)
            assert np.array_equal(out.states, ref_states)
            assert np.array_equal(out.totals, ref_totals)


def test_permuting_inputs_permutes_outputs():
    env = PlanarPusher()
    rng = np.random.default_rng(11)
    controls = rng.uniform(-60, 60, (16, 20, 2))
    cost = tracking(env, q=np.ones(10))
    perm = rng.permutation(16)
    with RolloutEngine(env, workers=4) as eng:
        a = eng.evaluate(env.initial_state(), controls, cost).totals.copy()
        b = eng.evaluate(env.initial_state(), controls[perm], cost).totals.copy()
    assert np.array_equal(a[perm], b)


def test_divergence_truncates_with_sentinel():
    env = DoubleIntegrator(mass=1e-308)  # any nonzero force overflows the velocity
    cost = tracking(env, q=[1.0, 0, 0, 0], x_ref=[2.0, 0, 0, 0])
    controls = np.zeros((10, 2))
    controls[3:] = 1.0
    res = rollout(env, np.zeros(4), controls, cost)
    assert res.diverged and res.steps_completed == 3
    assert np.all(np.isnan(res.states[4:])) and np.all(np.isfinite(res.states[:4]))
    assert res.total_cost == pytest.approx(DIVERGENCE_COST + 3 * 4.0)
    assert np.all(res.step_costs[3:] == 0.0)


def test_divergence_in_interpreted_env():
    env = NumpyDoubleIntegrator(blow_up_after=0.001)
    res = rollout(env, np.zeros(4), np.full((30, 2), 2.0), tracking(env))
    assert res.diverged and 0 < res.steps_completed < 30
    assert res.total_cost == DIVERGENCE_COST


def test_diverged_rollouts_rank_by_cost_so_far():
    env = DoubleIntegrator(mass=1e-308)
    cost = tracking(env, q=[1.0, 0, 0, 0], x_ref=[2.0, 0, 0, 0])
    early = np.zeros((10, 2))
    early[2:] = 1.0
    late = np.zeros((10, 2))
    late[6:] = 1.0
    out = rollout_batch(env, np.zeros(4), [early, late], cost)
    assert out[0].diverged and out[1].diverged
    assert out[0].total_cost == DIVERGENCE_COST + 8.0 and out[1].total_cost == DIVERGENCE_COST + 24.0


@pytest.mark.parametrize(
    "x0, controls",
    [(np.zeros(3), np.zeros((5, 2))), (np.zeros(4), np.zeros((5, 3))), (np.zeros(4), np.full((5, 2), np.nan))],
)
def test_bad_inputs_raise(x0, controls):
    env = DoubleIntegrator()
    with pytest.raises(ValueError):
        rollout(env, x0, controls, tracking(env))


def test_cost_dimension_mismatch_raises():
    env = DoubleIntegrator()
    with pytest.raises(ValueError):
        rollout(env, np.zeros(4), np.zeros((5, 2)), tracking(Hopper()))


def test_unclonable_env_is_reported():
    class Broken(NumpyDoubleIntegrator):
        def clone_for_evaluation(self):
            raise TypeError("no copies")

    with pytest.raises(RuntimeError, match="replicate"):
        RolloutEngine(Broken(), workers=2)
