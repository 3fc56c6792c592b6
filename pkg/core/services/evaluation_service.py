from __future__ import annotations
import contextlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import torch

from core.models.env import ADVERSARY_INDEX, EnvConfig
from core.networks.belief_policy import DTYPE, BeliefPolicy
from core.services.particle_world import ParticleWorld
from core.storage.csv_store import TrajectoryWriter

logger = logging.getLogger(__name__)


@dataclass
class EvaluationResult:
    good_returns: List[float] = field(default_factory=list)
    adv_returns: List[float] = field(default_factory=list)
    trajectory_files: List[Path] = field(default_factory=list)

    @property
    def mean_good(self) -> float:
        return float(np.mean(self.good_returns))

    @property
    def var_good(self) -> float:
        return float(np.var(self.good_returns))

    @property
    def mean_adv(self) -> float:
        return float(np.mean(self.adv_returns))

    @property
    def var_adv(self) -> float:
        return float(np.var(self.adv_returns))


@torch.no_grad()
def evaluate_policy(good_policy: BeliefPolicy, adv_policy: BeliefPolicy, env_config: EnvConfig,
                    n_episodes: int, seed: int, deterministic: bool = False,
                    dump_dir: Optional[Union[str, Path]] = None) -> EvaluationResult:
    """
    Exécution décentralisée: chaque agent ne voit que son observation,
    aucune croyance vérité terrain ni récompense intrinsèque.
    """
    env = ParticleWorld(env_config)
    seeder = np.random.default_rng(seed)
    generator = torch.Generator().manual_seed(int(seed))
    result = EvaluationResult()
    good_idx = np.arange(1, env.n_agents)

    for episode in range(n_episodes):
        state, obs = env.reset(int(seeder.integers(2**31 - 1)))
        writer = contextlib.nullcontext()
        if dump_dir is not None:
            path = Path(dump_dir) / f"episode_{episode:03d}.csv"
            writer = TrajectoryWriter(path, env.n_agents)
            result.trajectory_files.append(path)
        good_total = adv_total = 0.0
        done = False
        with writer as traj:
            while not done:
                actions = np.zeros(env.n_agents, dtype=np.int64)
                a_good, _, _ = good_policy.act(torch.as_tensor(obs[good_idx], dtype=DTYPE), generator, deterministic)
                a_adv, _, _ = adv_policy.act(torch.as_tensor(obs[ADVERSARY_INDEX], dtype=DTYPE), generator, deterministic)
                actions[good_idx] = a_good.numpy()
                actions[ADVERSARY_INDEX] = int(a_adv)
                t = state.t
                step = env.step(state, actions)
                if traj is not None:
                    traj.write(t, step.next_state.agent_pos, actions, step.rewards, state.target_index)
                good_total += float(step.rewards[1])
                adv_total += float(step.rewards[ADVERSARY_INDEX])
                state, obs, done = step.next_state, step.observations, step.done
        result.good_returns.append(good_total)
        result.adv_returns.append(adv_total)

    logger.info("evaluation over %d episodes: good=%.3f (var %.3f) adv=%.3f (var %.3f)",
                n_episodes, result.mean_good, result.var_good, result.mean_adv, result.var_adv)
    return result
