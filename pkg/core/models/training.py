from __future__ import annotations
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

Role = Literal["good", "adversary"]
CriticInput = Literal["local", "global"]


class IntrinsicConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    tom_lambda: float = Field(0.1, ge=0)
    tom_clip: Optional[float] = Field(10.0, gt=0)


class PolicyConfig(BaseModel):
    """Architecture d'un réseau de politique (sérialisée dans les checkpoints)."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    obs_dim: int = Field(ge=1)
    n_landmarks: int = Field(ge=2)
    n_coeffs: int = Field(ge=1)
    n_agents: int = Field(ge=2)
    hidden_dim: int = Field(64, ge=1)
    hidden_layers: int = Field(2, ge=1)
    residual_dim: int = Field(8, ge=1)
    # False = baseline: acteur et critique lisent l'observation brute
    bottleneck: bool = True
    actor_sees_second_order: bool = False
    critic_input: CriticInput = "local"

    @property
    def belief_dim(self) -> int:
        return self.n_landmarks + self.n_coeffs


class TrainConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    # Poids de la perte combinée
    alpha: float = Field(1.0, gt=0)
    beta: float = Field(0.5, gt=0)
    gamma: float = Field(0.1, gt=0)
    second_order_coef: float = Field(0.5, ge=0)
    epsilon: float = Field(0.2, gt=0, lt=1)
    gae_lambda: float = Field(0.95, ge=0, le=1)
    discount: float = Field(0.99, ge=0, lt=1)
    value_coef: float = Field(0.5, ge=0)
    entropy_coef: float = Field(0.01, ge=0)
    normalize_advantages: bool = True
    max_grad_norm: Optional[float] = Field(0.5, gt=0)

    # Collecte et optimisation
    rollout_len: int = Field(2048, ge=1)
    n_envs: int = Field(1, ge=1)
    minibatches: int = Field(32, ge=1)
    epochs: int = Field(10, ge=1)
    lr: float = Field(3e-4, gt=0)
    swap_interval: int = Field(100_000, ge=1)
    total_steps: int = Field(200_000, ge=1)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)

    # Modèle variationnel q(z|b)
    var_lr: float = Field(1e-3, gt=0)
    var_hidden_dim: int = Field(64, ge=1)
    var_steps: int = Field(1, ge=0)
    var_steps_warmup: int = Field(5, ge=0)
    var_warmup_updates: int = Field(10, ge=0)

    # Architecture
    hidden_dim: int = Field(64, ge=1)
    hidden_layers: int = Field(2, ge=1)
    residual_dim: int = Field(8, ge=1)
    actor_sees_second_order: bool = False
    critic_input: CriticInput = "local"

    @property
    def steps_per_update(self) -> int:
        return self.rollout_len * self.n_envs


class PopulationSettings(BaseModel):
    """Réglages effectifs d'une population après application de la ligne de grille."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    role: Role
    bottleneck: bool = True
    beta: float = Field(0.5, ge=0)
    gamma: float = Field(0.1, ge=0)
    second_order_coef: float = Field(0.0, ge=0)
    intrinsic: IntrinsicConfig = Field(default_factory=lambda: IntrinsicConfig(tom_lambda=0.0))


class MetricsRecord(BaseModel):
    update_index: int
    env_steps: int
    population: Role
    mean_ep_reward_good: float
    mean_ep_reward_adv: float
    L_ppo: float
    L_belief: float
    L_residual: float
    L_q: float
    L_2nd_order: float
    r_tom_mean: float


METRICS_COLUMNS = list(MetricsRecord.model_fields)
