import numpy as np
import pytest

from core.models.env import EnvConfig, WorldState
from core.models.experiment import ExperimentConfig
from core.models.training import TrainConfig


def tiny_experiment(**train_overrides) -> ExperimentConfig:
    train = dict(
        rollout_len=40, n_envs=2, minibatches=2, epochs=1, swap_interval=160,
        total_steps=320, hidden_dim=16, residual_dim=4, var_hidden_dim=16,
        var_warmup_updates=1, seeds=[3],
    )
    train.update(train_overrides)
    return ExperimentConfig(
        eval_episodes=2,
        env=EnvConfig(max_steps=15),
        train=TrainConfig(**train),
    )


@pytest.fixture
def tiny_config() -> ExperimentConfig:
    return tiny_experiment()


def make_state(landmarks, agents, target=0, eta=(0.5, 0.5), t=0, vel=None) -> WorldState:
    agents = np.asarray(agents, dtype=np.float64)
    return WorldState(
        landmark_pos=np.asarray(landmarks, dtype=np.float64),
        agent_pos=agents,
        agent_vel=np.zeros_like(agents) if vel is None else np.asarray(vel, dtype=np.float64),
        target_index=target,
        eta=np.asarray(eta, dtype=np.float64),
        t=t,
    )
