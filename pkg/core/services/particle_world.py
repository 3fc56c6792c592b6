from __future__ import annotations
from typing import Optional, Sequence, Tuple

import numpy as np

from core.errors import DimensionError, EpisodeFinishedError
from core.models.env import (
    ACTION_DIRECTIONS,
    ADVERSARY_INDEX,
    N_ACTIONS,
    EnvConfig,
    GroundTruthBeliefs,
    StepResult,
    WorldState,
)


class ParticleWorld:
    """
    Monde 2D "physical deception": N repères dont une cible cachée,
    n_good bons agents et un adversaire (index 0).

    L'instance ne garde aucun état d'épisode: reset/step prennent et
    renvoient des WorldState immuables, ce qui permet de paralléliser
    plusieurs mondes sans partage.
    """

    def __init__(self, config: Optional[EnvConfig] = None):
        self.config = config or EnvConfig()
        cfg = self.config
        self.n_agents = cfg.n_agents
        self.n_actions = N_ACTIONS
        self.obs_dim = cfg.obs_dim
        self.belief_dim = cfg.belief_dim
        self._accel = np.full(self.n_agents, cfg.accel_good, dtype=np.float64)
        self._accel[ADVERSARY_INDEX] = cfg.accel_adv

    # ---------------- Épisode ---------------- #

    def reset(self, seed: Optional[int] = None) -> Tuple[WorldState, np.ndarray]:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        w = cfg.world_halfwidth
        state = WorldState(
            landmark_pos=rng.uniform(-w, w, size=(cfg.n_landmarks, 2)),
            agent_pos=rng.uniform(-w, w, size=(self.n_agents, 2)),
            agent_vel=np.zeros((self.n_agents, 2), dtype=np.float64),
            target_index=int(rng.integers(cfg.n_landmarks)),
            eta=rng.uniform(0.0, 1.0, size=int(cfg.n_good)),
            t=0,
        )
        return state, self.observe(state)

    def step(self, state: WorldState, actions: Sequence[int]) -> StepResult:
        cfg = self.config
        if state.done or state.t >= cfg.max_steps:
            raise EpisodeFinishedError()
        acts = np.asarray(actions, dtype=np.int64).reshape(-1)
        if acts.shape[0] != self.n_agents:
            raise DimensionError(f"expected {self.n_agents} actions, got {acts.shape[0]}")
        if acts.min() < 0 or acts.max() >= N_ACTIONS:
            raise ValueError(f"action out of range [0, {N_ACTIONS}): {acts.tolist()}")

        # Intégration d'Euler avec amortissement
        vel = (1.0 - cfg.damping) * state.agent_vel
        vel = vel + self._accel[:, None] * ACTION_DIRECTIONS[acts] * cfg.dt
        speed = np.linalg.norm(vel, axis=1)
        too_fast = speed > cfg.max_speed
        if too_fast.any():
            vel[too_fast] *= (cfg.max_speed / speed[too_fast])[:, None]
        w = cfg.world_halfwidth
        pos = np.clip(state.agent_pos + vel * cfg.dt, -w, w)

        # récompenses évaluées sur les positions déplacées, au pas t d'origine
        moved = state.evolve(agent_pos=pos, agent_vel=vel)
        capture = self.capture_event(moved)
        rewards = np.full(self.n_agents, self.good_reward(moved), dtype=np.float64)
        rewards[ADVERSARY_INDEX] = self.adv_reward(moved)

        t_next = state.t + 1
        done = t_next >= cfg.max_steps or capture is not None
        next_state = moved.evolve(t=t_next, done=done)
        return StepResult(
            next_state=next_state,
            observations=self.observe(next_state),
            rewards=rewards,
            done=done,
            capture_event=capture,
        )

    # ---------------- Observations ---------------- #

    def observe(self, state: WorldState) -> np.ndarray:
        cfg = self.config
        obs = np.zeros((self.n_agents, self.obs_dim), dtype=np.float64)
        target = state.landmark_pos[state.target_index]
        good_dist = np.linalg.norm(state.agent_pos[1:] - target, axis=1)
        weighted_sum = float(np.dot(state.eta, good_dist))
        n_lm = 2 * cfg.n_landmarks
        for k in range(self.n_agents):
            own = state.agent_pos[k]
            others = np.delete(state.agent_pos, k, axis=0) - own
            obs[k, 0:2] = state.agent_vel[k]
            obs[k, 2:2 + n_lm] = (state.landmark_pos - own).reshape(-1)
            obs[k, 2 + n_lm:self.obs_dim - 2] = others.reshape(-1)
            if k != ADVERSARY_INDEX:
                # l'adversaire garde des zéros: ni cible ni coefficients
                obs[k, -2] = weighted_sum
                obs[k, -1] = state.eta[k - 1]
        return obs

    def ground_truth_beliefs(self, state: WorldState) -> GroundTruthBeliefs:
        onehot = np.zeros(self.config.n_landmarks, dtype=np.float64)
        onehot[state.target_index] = 1.0
        return GroundTruthBeliefs(target_onehot=onehot, coefficients=np.array(state.eta, dtype=np.float64))

    # ---------------- Récompenses ---------------- #

    def capture_event(self, state: WorldState) -> Optional[int]:
        d = np.linalg.norm(state.landmark_pos - state.agent_pos[ADVERSARY_INDEX], axis=1)
        idx = int(np.argmin(d))
        return idx if d[idx] < self.config.capture_radius else None

    def good_reward(self, state: WorldState) -> float:
        target = state.landmark_pos[state.target_index]
        d_good = np.linalg.norm(state.agent_pos[1:] - target, axis=1)
        if self.config.weighted_good_reward:
            d_good = state.eta * d_good
        d_adv = float(np.linalg.norm(state.agent_pos[ADVERSARY_INDEX] - target))
        return float(-np.min(d_good) + d_adv)

    def adv_reward(self, state: WorldState) -> float:
        target = state.landmark_pos[state.target_index]
        reward = -float(np.linalg.norm(state.agent_pos[ADVERSARY_INDEX] - target))
        capture = self.capture_event(state)
        if capture is None:
            return reward
        scale = 1.0 - state.t / self.config.max_steps
        sign = 1.0 if capture == state.target_index else -1.0
        if self.config.literal_adv_bonus:
            sign = -sign
        return reward + sign * scale
