from __future__ import annotations
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

# Actions discrètes: 0=no-op, 1=+x, 2=-x, 3=+y, 4=-y
N_ACTIONS = 5
ACTION_DIRECTIONS = np.array(
    [[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
    dtype=np.float64,
)
ADVERSARY_INDEX = 0


class EnvConfig(BaseModel):
    """
    Paramètres du monde "physical deception".
    - agent 0 = adversaire, agents 1..n_good = bons agents
    - n_good vaut n_landmarks si non renseigné
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_landmarks: int = Field(2, ge=2)
    n_good: Optional[int] = Field(None, ge=1)
    max_steps: int = Field(50, ge=1)
    world_halfwidth: float = Field(1.0, gt=0)
    capture_radius: float = Field(0.1, gt=0)
    dt: float = Field(0.1, gt=0)
    damping: float = Field(0.25, ge=0, lt=1)
    max_speed: float = Field(1.0, gt=0)
    accel_good: float = Field(3.0, gt=0)
    accel_adv: float = Field(4.0, gt=0)
    weighted_good_reward: bool = False
    # signe inversé: bonus pour une non-cible, malus pour la cible
    literal_adv_bonus: bool = False
    seed: int = 0

    @model_validator(mode="after")
    def _default_good_count(self) -> "EnvConfig":
        if self.n_good is None:
            object.__setattr__(self, "n_good", self.n_landmarks)
        return self

    @property
    def n_agents(self) -> int:
        return int(self.n_good) + 1

    @property
    def obs_dim(self) -> int:
        return 2 + 2 * self.n_landmarks + 2 * (self.n_agents - 1) + 2

    @property
    def belief_dim(self) -> int:
        # [cible (N) | coefficients (un par bon agent)]
        return self.n_landmarks + int(self.n_good)


@dataclass(frozen=True)
class WorldState:
    landmark_pos: np.ndarray  # (N, 2)
    agent_pos: np.ndarray     # (K, 2)
    agent_vel: np.ndarray     # (K, 2)
    target_index: int
    eta: np.ndarray           # (n_good,)
    t: int = 0
    done: bool = False

    def evolve(self, **changes) -> "WorldState":
        return replace(self, **changes)


@dataclass(frozen=True)
class GroundTruthBeliefs:
    target_onehot: np.ndarray
    coefficients: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.target_onehot, self.coefficients])


@dataclass(frozen=True)
class StepResult:
    next_state: WorldState
    observations: np.ndarray  # (K, obs_dim)
    rewards: np.ndarray       # (K,)
    done: bool
    capture_event: Optional[int] = None


