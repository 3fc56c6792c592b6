import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from core.errors import DimensionError, EpisodeFinishedError
from core.models.env import EnvConfig
from core.services.particle_world import ParticleWorld
from tests.conftest import make_state

FAR = [[0.9, 0.9], [-0.9, -0.9]]


@pytest.fixture
def env():
    return ParticleWorld(EnvConfig())


def test_reset_is_deterministic(env):
    a, obs_a = env.reset(42)
    b, obs_b = env.reset(42)
    for field in ("landmark_pos", "agent_pos", "agent_vel", "eta"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    assert a.target_index == b.target_index
    assert np.array_equal(obs_a, obs_b)


def test_reset_initial_conditions(env):
    state, obs = env.reset(1)
    assert state.t == 0
    assert np.all(state.agent_vel == 0)
    assert np.all(np.abs(state.agent_pos) <= 1.0)
    assert np.all((state.eta >= 0) & (state.eta <= 1))
    assert obs.shape == (3, 12)


def test_observation_length_for_two_landmarks():
    assert EnvConfig(n_landmarks=2).obs_dim == 2 + 4 + 4 + 2
    assert EnvConfig(n_landmarks=3).obs_dim == 2 + 6 + 6 + 2


def test_target_index_differs_across_seeds(env):
    differ = sum(env.reset(s)[0].target_index != env.reset(s + 10_000)[0].target_index for s in range(1000))
    assert abs(differ / 1000 - 0.5) <= 0.05


def test_config_validation():
    with pytest.raises(ValidationError):
        EnvConfig(n_landmarks=1)
    with pytest.raises(ValidationError):
        EnvConfig(capture_radius=0.0)
    assert EnvConfig(n_landmarks=3).n_good == 3
    assert EnvConfig(n_landmarks=3, n_good=2).n_agents == 3


def test_noop_from_rest_keeps_positions(env):
    state = make_state(FAR, [[0.0, 0.0], [0.2, 0.1], [-0.3, 0.4]])
    result = env.step(state, [0, 0, 0])
    assert np.array_equal(result.next_state.agent_pos, state.agent_pos)
    assert result.next_state.t == 1
    assert not result.done


def test_single_push_from_rest(env):
    state = make_state(FAR, [[0.0, 0.0], [0.2, 0.1], [-0.3, 0.4]])
    result = env.step(state, [0, 1, 0])
    assert result.next_state.agent_vel[1, 0] == pytest.approx(3.0 * 0.1)
    assert result.next_state.agent_pos[1, 0] == pytest.approx(0.2 + 3.0 * 0.1 ** 2)
    assert result.next_state.agent_pos[1, 1] == pytest.approx(0.1)


def test_capture_ends_episode(env):
    state = make_state([[0.5, 0.5], [-0.5, -0.5]], [[0.45, 0.5], [0.0, 0.0], [0.1, 0.1]], target=1)
    result = env.step(state, [0, 0, 0])
    assert result.done
    assert result.capture_event == 0


def test_stepping_terminal_state_fails(env):
    state = make_state(FAR, [[0.0, 0.0], [0.2, 0.1], [-0.3, 0.4]], t=50)
    with pytest.raises(EpisodeFinishedError, match="episode finished"):
        env.step(state, [0, 0, 0])


def test_invalid_actions(env):
    state = make_state(FAR, [[0.0, 0.0], [0.2, 0.1], [-0.3, 0.4]])
    with pytest.raises(ValueError):
        env.step(state, [0, 5, 0])
    with pytest.raises(DimensionError):
        env.step(state, [0, 0])


# ---------------- Récompenses ---------------- #

def test_good_reward_example(env):
    state = make_state([[0.0, 0.0], [-0.9, 0.9]], [[0.8, 0.0], [0.5, 0.0], [0.0, 1.2]], target=0)
    assert env.good_reward(state) == pytest.approx(0.3)


def test_good_reward_everyone_on_target(env):
    state = make_state([[0.2, 0.2], [-0.9, 0.9]], [[0.2, 0.2]] * 3)
    assert env.good_reward(state) == 0.0


def test_weighted_good_reward():
    env = ParticleWorld(EnvConfig(weighted_good_reward=True))
    state = make_state([[0.0, 0.0], [-0.9, 0.9]], [[0.0, 0.0], [1.0, 0.0], [0.0, 0.4]], eta=(0.5, 1.0))
    assert env.good_reward(state) == pytest.approx(-0.4)


def test_adv_reward_capture_target_at_start(env):
    state = make_state([[0.3, 0.3], [-0.9, 0.9]], [[0.3, 0.3], [0.0, 0.0], [0.1, 0.1]], target=0, t=0)
    assert env.adv_reward(state) == pytest.approx(1.0)


def test_adv_reward_non_target_capture_at_horizon(env):
    state = make_state([[0.3, 0.3], [-0.3, 0.3]], [[-0.3, 0.3], [0.0, 0.0], [0.1, 0.1]], target=0, t=50)
    assert env.adv_reward(state) == pytest.approx(-0.6)


def test_adv_reward_without_capture(env):
    state = make_state([[0.0, 0.0], [-0.9, 0.9]], [[0.7, 0.0], [0.0, 0.5], [0.1, 0.1]], target=0)
    assert env.adv_reward(state) == pytest.approx(-0.7)


def test_literal_bonus_flips_sign():
    env = ParticleWorld(EnvConfig(literal_adv_bonus=True))
    state = make_state([[0.3, 0.3], [-0.9, 0.9]], [[0.3, 0.3], [0.0, 0.0], [0.1, 0.1]], target=0, t=10)
    assert env.adv_reward(state) == pytest.approx(-(1 - 10 / 50))


def _oracle_good(state, weighted):
    tx, ty = state.landmark_pos[state.target_index]
    best = math.inf
    for i in range(1, len(state.agent_pos)):
        d = math.hypot(state.agent_pos[i][0] - tx, state.agent_pos[i][1] - ty)
        if weighted:
            d *= state.eta[i - 1]
        best = min(best, d)
    return -best + math.hypot(state.agent_pos[0][0] - tx, state.agent_pos[0][1] - ty)


def _oracle_adv(state, radius, horizon):
    tx, ty = state.landmark_pos[state.target_index]
    ax, ay = state.agent_pos[0]
    reward = -math.hypot(ax - tx, ay - ty)
    dists = [math.hypot(ax - lx, ay - ly) for lx, ly in state.landmark_pos]
    nearest = dists.index(min(dists))
    if dists[nearest] < radius:
        bonus = 1 - state.t / horizon
        reward += bonus if nearest == state.target_index else -bonus
    return reward


@pytest.mark.parametrize("weighted", [False, True])
def test_rewards_match_straight_line_oracle(weighted):
    env = ParticleWorld(EnvConfig(weighted_good_reward=weighted))
    rng = np.random.default_rng(0)
    for _ in range(1000):
        landmarks = rng.uniform(-1, 1, size=(2, 2))
        agents = rng.uniform(-1, 1, size=(3, 2))
        if rng.random() < 0.3:
            agents[0] = landmarks[rng.integers(2)] + rng.uniform(-0.05, 0.05, size=2)
        state = make_state(landmarks, agents, target=int(rng.integers(2)),
                           eta=rng.uniform(0, 1, size=2), t=int(rng.integers(0, 51)))
        assert abs(env.good_reward(state) - _oracle_good(state, weighted)) <= 1e-12
        assert abs(env.adv_reward(state) - _oracle_adv(state, 0.1, 50)) <= 1e-12


# ---------------- Croyances et observations ---------------- #

def test_ground_truth_beliefs(env):
    state = make_state(FAR, [[0.0, 0.0], [0.2, 0.1], [-0.3, 0.4]], target=1, eta=(0.3, 0.9))
    truth = env.ground_truth_beliefs(state)
    assert truth.target_onehot.tolist() == [0.0, 1.0]
    assert truth.coefficients.tolist() == [0.3, 0.9]
    moved = env.step(state, [1, 2, 3]).next_state
    assert np.array_equal(env.ground_truth_beliefs(moved).as_vector(), truth.as_vector())


def test_adversary_observation_is_private(env):
    agents = [[0.0, 0.0], [0.2, 0.1], [-0.3, 0.4]]
    a = make_state(FAR, agents, target=0, eta=(0.1, 0.2))
    b = make_state(FAR, agents, target=1, eta=(0.7, 0.9))
    assert np.array_equal(env.observe(a)[0], env.observe(b)[0])
    assert not np.array_equal(env.observe(a)[1], env.observe(b)[1])
    assert np.all(env.observe(a)[0, -2:] == 0)


def test_good_observation_layout(env):
    state = make_state([[0.5, 0.0], [-0.5, 0.0]], [[0.0, 0.5], [0.1, 0.0], [0.0, -0.2]], target=0, eta=(0.4, 0.6))
    obs = env.observe(state)[1]
    assert obs[2:4].tolist() == pytest.approx([0.4, 0.0])
    assert obs[6:8].tolist() == pytest.approx([-0.1, 0.5])
    expected = 0.4 * 0.4 + 0.6 * math.hypot(0.5, 0.2)
    assert obs[-2] == pytest.approx(expected)
    assert obs[-1] == pytest.approx(0.4)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 2), actions=st.lists(st.lists(st.integers(0, 4), min_size=3, max_size=3),
                                                       min_size=1, max_size=80))
def test_rollout_properties(seed, actions):
    env = ParticleWorld(EnvConfig())
    state, _ = env.reset(seed)
    steps = 0
    for joint in actions:
        if state.done:
            break
        result = env.step(state, joint)
        state = result.next_state
        steps += 1
        assert np.all(np.abs(state.agent_vel) <= 1.0 + 1e-12)
        assert np.all(np.abs(state.agent_pos) <= 1.0)
        assert np.all(np.isfinite(result.observations))
    assert steps <= env.config.max_steps


def test_trajectories_are_deterministic(env):
    rng = np.random.default_rng(5)
    joint = rng.integers(0, 5, size=(50, 3))

    def run():
        state, _ = env.reset(9)
        out = []
        for a in joint:
            if state.done:
                break
            r = env.step(state, a)
            out.append((r.next_state.agent_pos.copy(), r.rewards.copy()))
            state = r.next_state
        return out

    first, second = run(), run()
    assert len(first) == len(second)
    for (pa, ra), (pb, rb) in zip(first, second):
        assert np.array_equal(pa, pb) and np.array_equal(ra, rb)
