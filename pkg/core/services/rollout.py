"""
Collecte centralisée des trajectoires (CTDE).

Chaque agent agit sur sa seule observation locale; les croyances vérité
terrain et les croyances de tous les agents sont enregistrées à part,
pour les pertes supervisées et la récompense intrinsèque.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np
import torch
from torch import Tensor

from core.models.env import ADVERSARY_INDEX, EnvConfig
from core.models.training import PopulationSettings, Role, TrainConfig
from core.networks.belief_policy import DTYPE, BeliefPolicy, BeliefVector, PolicyOutput
from core.services.intrinsic_reward import combined_reward, tom_reward
from core.services.particle_world import ParticleWorld


# ---------------- GAE ---------------- #

def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                last_values: np.ndarray, discount: float, gae_lambda: float
                ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Avantages GAE(discount, gae_lambda) le long de l'axe 0.
    dones[t] = l'épisode s'est terminé après l'action t (pas de bootstrap au-delà).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape[0] == 0:
        raise ValueError("empty rollout buffer")
    values = np.asarray(values, dtype=np.float64)
    nonterminal = 1.0 - np.asarray(dones, dtype=np.float64)
    advantages = np.zeros_like(rewards)
    last = np.zeros_like(rewards[0])
    for t in reversed(range(rewards.shape[0])):
        next_values = last_values if t == rewards.shape[0] - 1 else values[t + 1]
        delta = rewards[t] + discount * next_values * nonterminal[t] - values[t]
        last = delta + discount * gae_lambda * nonterminal[t] * last
        advantages[t] = last
    return advantages, advantages + values


# ---------------- Buffer ---------------- #

class MiniBatch(NamedTuple):
    obs: Tensor
    critic_obs: Tensor
    actions: Tensor
    old_log_probs: Tensor
    advantages: Tensor
    returns: Tensor
    truths: Tensor
    actuals: BeliefVector
    self_index: Tensor

    @property
    def size(self) -> int:
        return self.obs.shape[0]

    def select(self, idx: Tensor) -> "MiniBatch":
        actuals = BeliefVector(*(t[idx] for t in self.actuals))
        return MiniBatch(*(t[idx] for t in self[:7]), actuals, self.self_index[idx])


@dataclass
class RolloutBuffer:
    """Tableaux (T, E, A, ...) pour les A agents d'une population dans E mondes."""
    role: Role
    agent_indices: np.ndarray
    obs: np.ndarray
    critic_obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    ext_rewards: np.ndarray
    int_rewards: np.ndarray
    rewards: np.ndarray
    truths: np.ndarray
    own_beliefs: np.ndarray
    all_beliefs: np.ndarray  # (T, E, K, D)
    dones: np.ndarray        # (T, E)
    last_values: np.ndarray  # (E, A)
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.obs.shape[0] * self.obs.shape[1]

    def compute_advantages(self, config: TrainConfig) -> "RolloutBuffer":
        self.advantages, self.returns = compute_gae(
            self.rewards, self.values, self.dones[..., None], self.last_values,
            config.discount, config.gae_lambda,
        )
        return self

    def to_batch(self, n_landmarks: int) -> MiniBatch:
        if self.advantages is None:
            raise ValueError("advantages not computed")
        t, e, a = self.obs.shape[:3]
        n = t * e * a

        def flat(x: np.ndarray) -> Tensor:
            return torch.as_tensor(x.reshape(n, *x.shape[3:]))

        actual = np.broadcast_to(self.all_beliefs[:, :, None], (t, e, a) + self.all_beliefs.shape[2:])
        actual = torch.as_tensor(np.ascontiguousarray(actual).reshape(n, *self.all_beliefs.shape[2:]))
        dist, coeff = actual[..., :n_landmarks], actual[..., n_landmarks:]
        actuals = BeliefVector(dist.log(), dist, coeff)
        self_index = torch.as_tensor(np.ascontiguousarray(np.broadcast_to(self.agent_indices, (t, e, a))).reshape(n))
        return MiniBatch(
            obs=flat(self.obs),
            critic_obs=flat(self.critic_obs),
            actions=flat(self.actions),
            old_log_probs=flat(self.log_probs),
            advantages=flat(self.advantages),
            returns=flat(self.returns),
            truths=flat(self.truths),
            actuals=actuals,
            self_index=self_index,
        )


# ---------------- Mondes parallèles ---------------- #

class WorldPool:
    """
    E mondes indépendants, réinitialisés automatiquement en fin d'épisode.
    Les graines d'épisode viennent d'un générateur propre à chaque monde.
    """

    def __init__(self, config: EnvConfig, n_envs: int, seed: int):
        self.envs = [ParticleWorld(config) for _ in range(n_envs)]
        self._seeders = [np.random.default_rng([seed, e]) for e in range(n_envs)]
        self.states = []
        self.obs = np.zeros((n_envs, config.n_agents, config.obs_dim), dtype=np.float64)
        self._returns = np.zeros((n_envs, 2), dtype=np.float64)
        for e in range(n_envs):
            self._reset(e)

    def _reset(self, e: int) -> None:
        state, obs = self.envs[e].reset(int(self._seeders[e].integers(2**31 - 1)))
        if e < len(self.states):
            self.states[e] = state
        else:
            self.states.append(state)
        self.obs[e] = obs
        self._returns[e] = 0.0

    def truths(self) -> np.ndarray:
        return np.stack([env.ground_truth_beliefs(s).as_vector() for env, s in zip(self.envs, self.states)])

    def step(self, actions: np.ndarray):
        """Retourne (récompenses (E, K), dones (E,), retours finis [(bon, adv)])."""
        n_envs, k = actions.shape
        rewards = np.zeros((n_envs, k), dtype=np.float64)
        dones = np.zeros(n_envs, dtype=bool)
        finished: List[Tuple[float, float]] = []
        for e, env in enumerate(self.envs):
            result = env.step(self.states[e], actions[e])
            rewards[e] = result.rewards
            self._returns[e, 0] += result.rewards[1]
            self._returns[e, 1] += result.rewards[ADVERSARY_INDEX]
            self.states[e] = result.next_state
            self.obs[e] = result.observations
            if result.done:
                dones[e] = True
                finished.append((float(self._returns[e, 0]), float(self._returns[e, 1])))
                self._reset(e)
        return rewards, dones, finished


@dataclass
class RolloutResult:
    buffers: Dict[str, RolloutBuffer]
    episode_returns: List[Tuple[float, float]] = field(default_factory=list)

    def mean_episode_reward(self, population: int) -> float:
        if not self.episode_returns:
            return float("nan")
        return float(np.mean([r[population] for r in self.episode_returns]))


def _to_tensor(x: np.ndarray) -> Tensor:
    return torch.as_tensor(x, dtype=DTYPE)


def _act(policy: BeliefPolicy, obs: np.ndarray, critic_obs: np.ndarray,
         generator: torch.Generator) -> Tuple[np.ndarray, np.ndarray, PolicyOutput]:
    actions, log_probs, out = policy.act(_to_tensor(obs), generator, critic_obs=_to_tensor(critic_obs))
    return actions.numpy(), log_probs.numpy(), out


def collect_rollouts(pool: WorldPool, policies: Dict[str, BeliefPolicy],
                     settings: Dict[str, PopulationSettings], config: TrainConfig,
                     generator: torch.Generator) -> RolloutResult:
    """
    Déroule config.rollout_len pas dans chaque monde du pool avec des
    snapshots de paramètres figés; remplit un buffer par population.
    """
    env_cfg = pool.envs[0].config
    n_envs, k, obs_dim = pool.obs.shape
    n_lm = env_cfg.n_landmarks
    groups = {"adversary": np.array([ADVERSARY_INDEX]), "good": np.arange(1, k)}
    steps = config.rollout_len
    d = env_cfg.belief_dim

    store: Dict[str, Dict[str, np.ndarray]] = {}
    for role, idx in groups.items():
        a = len(idx)
        store[role] = {
            "obs": np.zeros((steps, n_envs, a, obs_dim)),
            "critic_obs": np.zeros((steps, n_envs, a, k * obs_dim)),
            "actions": np.zeros((steps, n_envs, a), dtype=np.int64),
            "log_probs": np.zeros((steps, n_envs, a)),
            "values": np.zeros((steps, n_envs, a)),
            "ext_rewards": np.zeros((steps, n_envs, a)),
            "int_rewards": np.zeros((steps, n_envs, a)),
            "rewards": np.zeros((steps, n_envs, a)),
            "truths": np.zeros((steps, n_envs, a, d)),
            "own_beliefs": np.zeros((steps, n_envs, a, d)),
        }
    all_beliefs = np.zeros((steps, n_envs, k, d))
    dones = np.zeros((steps, n_envs), dtype=bool)
    finished: List[Tuple[float, float]] = []

    for t in range(steps):
        obs = pool.obs.copy()
        critic = obs.reshape(n_envs, 1, k * obs_dim)
        truths = pool.truths()
        joint_actions = np.zeros((n_envs, k), dtype=np.int64)
        outputs: Dict[str, PolicyOutput] = {}
        beliefs_t = np.zeros((n_envs, k, d))
        for role, idx in groups.items():
            rec = store[role]
            local = obs[:, idx]
            crit = np.broadcast_to(critic, (n_envs, len(idx), k * obs_dim))
            actions, log_probs, out = _act(policies[role], local, crit, generator)
            joint_actions[:, idx] = actions
            outputs[role] = out
            beliefs_t[:, idx] = out.belief.as_vector().numpy()
            rec["obs"][t] = local
            rec["critic_obs"][t] = crit
            rec["actions"][t] = actions
            rec["log_probs"][t] = log_probs
            rec["values"][t] = out.value.numpy()
            rec["truths"][t] = truths[:, None, :]
            rec["own_beliefs"][t] = beliefs_t[:, idx]
        all_beliefs[t] = beliefs_t

        # croyances réelles de tous les agents, même pas de temps
        actual_dist = torch.as_tensor(beliefs_t[..., :n_lm]).unsqueeze(1)
        actual = BeliefVector(actual_dist.log(), actual_dist, torch.as_tensor(beliefs_t[..., n_lm:]).unsqueeze(1))
        rewards, step_dones, done_returns = pool.step(joint_actions)
        for role, idx in groups.items():
            rec = store[role]
            r_tom = tom_reward(outputs[role].second_order, actual, torch.as_tensor(idx)).numpy()
            ext = rewards[:, idx]
            rec["ext_rewards"][t] = ext
            rec["int_rewards"][t] = r_tom
            rec["rewards"][t] = combined_reward(ext, r_tom, settings[role].intrinsic)
        dones[t] = step_dones
        finished.extend(done_returns)

    # bootstrap sur les observations courantes
    obs = pool.obs.copy()
    critic = obs.reshape(n_envs, 1, k * obs_dim)
    buffers: Dict[str, RolloutBuffer] = {}
    for role, idx in groups.items():
        crit = np.broadcast_to(critic, (n_envs, len(idx), k * obs_dim))
        with torch.no_grad():
            last = policies[role](_to_tensor(obs[:, idx]), _to_tensor(crit)).value.numpy()
        buffers[role] = RolloutBuffer(
            role=role, agent_indices=idx, all_beliefs=all_beliefs, dones=dones,
            last_values=last, **store[role],
        )
    return RolloutResult(buffers=buffers, episode_returns=finished)
