from __future__ import annotations
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field

from core.errors import ConfigError

from .common import TimeStamped
from .env import EnvConfig
from .training import IntrinsicConfig, PopulationSettings, Role, TrainConfig

GridRow = Literal["baseline", "first_order_both", "second_order_good", "second_order_adv"]
GRID_ROWS: List[str] = ["baseline", "first_order_both", "second_order_good", "second_order_adv"]

# (1st-order good, 1st-order adv, 2nd-order good, 2nd-order adv)
ROW_FLAGS: Dict[str, tuple] = {
    "baseline": (False, False, False, False),
    "first_order_both": (True, True, False, False),
    "second_order_good": (True, True, True, False),
    "second_order_adv": (True, True, False, True),
}


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    row: GridRow = "first_order_both"
    eval_episodes: int = Field(20, ge=1)
    env: EnvConfig = Field(default_factory=EnvConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    good: IntrinsicConfig = Field(default_factory=IntrinsicConfig)
    adv: IntrinsicConfig = Field(default_factory=IntrinsicConfig)

    def with_row(self, row: str) -> "ExperimentConfig":
        if row not in ROW_FLAGS:
            raise ConfigError("row", f"unknown grid row {row!r}")
        return self.model_copy(update={"row": row})

    def with_steps(self, steps: Optional[int]) -> "ExperimentConfig":
        if steps is None:
            return self
        if int(steps) < 1:
            raise ConfigError("steps", "budget must be a positive integer")
        train = self.train.model_copy(update={"total_steps": int(steps)})
        return self.model_copy(update={"train": train})

    def population_settings(self, role: Role) -> PopulationSettings:
        """Traduit la ligne de grille en réglages effectifs pour une population."""
        first_good, first_adv, second_good, second_adv = ROW_FLAGS[self.row]
        first = first_good if role == "good" else first_adv
        second = second_good if role == "good" else second_adv
        source = self.good if role == "good" else self.adv
        if not first:
            return PopulationSettings(role=role, bottleneck=False, beta=0.0, gamma=0.0)
        return PopulationSettings(
            role=role,
            bottleneck=True,
            beta=self.train.beta,
            gamma=self.train.gamma,
            second_order_coef=self.train.second_order_coef if second else 0.0,
            intrinsic=source if second else source.model_copy(update={"tom_lambda": 0.0}),
        )


class CellResult(TimeStamped):
    """Une cellule (ligne x graine) terminée, persistée dans le registre JSON."""
    cell_id: str
    config_digest: str = ""
    row: GridRow
    seed: int
    mean_good: float
    var_good: float
    mean_adv: float
    var_adv: float
    metrics_path: str
    checkpoint_path: Optional[str] = None


class RowSummary(BaseModel):
    row: GridRow
    first_order_good: bool
    first_order_adv: bool
    second_order_good: bool
    second_order_adv: bool
    reward_good: float
    var_good: float
    stderr_good: float
    reward_adv: float
    var_adv: float
    stderr_adv: float
    n_seeds: int
