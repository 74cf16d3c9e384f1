import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rwm.baseline import BaselinePolicy, base_action
from rwm.envs import (DT, LinearEnv, LinearPlant, PointMassEnv, PointMassState,
                      apply_perturbation, linear_plant_equilibrium_input, linear_step,
                      pointmass_reset, pointmass_step)


def test_zero_action_at_rest_is_fixed_point():
    s = pointmass_reset((0.5, 0.5), (0.2, 0.1))
    r = pointmass_step(s, np.zeros(2))
    assert np.array_equal(r.next_state.position, s.position)
    assert r.reward == pytest.approx(-np.linalg.norm(s.position - s.goal))


def test_coasting_formula():
    s = PointMassState(np.zeros(2), np.array([1.0, 0.0]), np.array([0.5, 0.5]))
    r = pointmass_step(s, np.zeros(2))
    assert np.allclose(r.next_state.velocity, [0.9, 0.0])
    assert np.allclose(r.next_state.position, [0.045, 0.0])
    assert r.next_state.t == 1


def test_observation_is_state_vector():
    s = pointmass_reset((0.3, 0.7), (0.1, 0.2))
    r = pointmass_step(s, np.array([0.5, -0.5]))
    assert np.array_equal(r.observation, r.next_state.vector())
    assert np.array_equal(PointMassState.from_vector(r.observation).vector(), r.observation)


def test_constant_push_toward_goal_reduces_distance():
    s = pointmass_reset((1.0, 0.0), (0.0, 0.0))
    dists = []
    for _ in range(10):
        r = pointmass_step(s, np.array([1.0, 0.0]))
        dists.append(-r.reward)
        s = r.next_state
    assert np.all(np.diff(dists) < 0)


def test_non_finite_action_rejected():
    with pytest.raises(ValueError):
        pointmass_step(pointmass_reset(), np.array([np.nan, 0.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.floats(-2, 2), st.floats(-2, 2))
def test_pointmass_deterministic(v, ax, ay):
    s = PointMassState.from_vector(v)
    a = np.array([ax, ay])
    r1, r2 = pointmass_step(s, a), pointmass_step(s, a)
    assert np.array_equal(r1.observation, r2.observation) and r1.reward == r2.reward


def test_pd_reaches_goal_from_unit_square():
    policy = BaselinePolicy()
    for seed in range(50):
        start = np.random.default_rng(seed).uniform(0, 1, 2)
        s = pointmass_reset((0.5, 0.5), start)
        for _ in range(200):
            s = pointmass_step(s, base_action(policy, s.vector())).next_state
        assert np.linalg.norm(s.position - s.goal) < 0.05


def test_apply_perturbation_examples():
    assert np.array_equal(apply_perturbation([1.0, -1.0], [0.0, 0.0]), [1.0, -1.0])
    assert np.allclose(apply_perturbation([1.0, -1.0], [0.5, -0.5]), [1.5, -0.5])
    assert np.array_equal(apply_perturbation([2.0, 0.0], [0.5, 0.0]), [2.0, 0.0])
    with pytest.raises(ValueError):
        apply_perturbation([1.0, 2.0], [0.1])


def test_linear_step_examples():
    plant = LinearPlant(0.9 * np.eye(2), np.eye(2))
    assert np.array_equal(linear_step(plant, np.zeros(2), np.zeros(2)), np.zeros(2))
    assert np.allclose(linear_step(plant, np.array([1.0, 0.0]), np.zeros(2)), [0.9, 0.0])
    with pytest.raises(ValueError):
        linear_step(plant, np.zeros(3), np.zeros(2))


def test_linear_plant_matches_matrix_recurrence():
    rng = np.random.default_rng(3)
    A = np.array([[0.5, 0.2, 0.0], [-0.1, 0.6, 0.1], [0.0, 0.2, 0.3]])
    B = rng.normal(size=(3, 2))
    plant = LinearPlant(A, B)
    z = rng.normal(size=3)
    direct = z.copy()
    for _ in range(50):
        a = rng.normal(size=2)
        z = linear_step(plant, z, a)
        direct = A @ direct + B @ a
    assert np.allclose(z, direct, rtol=0, atol=1e-13)


def test_noisy_linear_plant_is_seeded():
    plant = LinearPlant(0.5 * np.eye(2), np.eye(2), noise_std=0.1)
    runs = []
    for _ in range(2):
        env = LinearEnv(plant, np.zeros(2), seed=11)
        env.reset()
        runs.append([env.step(np.zeros(2))[0] for _ in range(20)])
    assert np.array_equal(np.array(runs[0]), np.array(runs[1]))


def test_linear_plant_validation():
    with pytest.raises(ValueError):
        LinearPlant(np.eye(2), np.eye(2))  # spectral radius 1
    with pytest.raises(ValueError):
        LinearPlant(0.5 * np.eye(2), np.array([[1.0, 1.0], [1.0, 1.0]]))  # rank deficient


def test_equilibrium_input_holds_reference():
    plant = LinearPlant(np.array([[0.5, 0.2], [-0.2, 0.5]]), np.eye(2))
    z_ref = np.array([2.0, 1.0])
    u = linear_plant_equilibrium_input(plant, z_ref)
    assert np.allclose(u, [0.8, 0.9])
    assert np.allclose(linear_step(plant, z_ref, u), z_ref)


def test_pointmass_env_reset_and_randomization():
    env = PointMassEnv(randomize_start=True, seed=4)
    a, b = env.reset(), env.reset()
    assert a.shape == (6,) and not np.array_equal(a[:2], b[:2])
    obs, reward = env.step(np.zeros(2))
    assert obs.shape == (6,) and reward <= 0
    fixed = PointMassEnv()
    assert np.array_equal(fixed.reset(), [0, 0, 0, 0, 0.5, 0.5])


def test_step_uses_dt():
    s = pointmass_reset((0, 0), (0, 0))
    r = pointmass_step(s, np.array([2.0, 0.0]))
    assert r.next_state.velocity[0] == pytest.approx(DT * 2.0)
