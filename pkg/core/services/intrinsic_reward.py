from __future__ import annotations
from typing import Optional, Union

import numpy as np
import torch
from torch import Tensor

from core.models.training import IntrinsicConfig
from core.networks.belief_policy import BeliefVector, SecondOrderBeliefs, second_order_loss


@torch.no_grad()
def tom_reward(pred: SecondOrderBeliefs, actuals: BeliefVector,
               self_index: Optional[Union[int, Tensor]] = None) -> Tensor:
    """r_tom = -erreur de prédiction de 2nd ordre, une valeur par échantillon (jamais différentiée)."""
    return -second_order_loss(pred, actuals, self_index, reduction="none")


def combined_reward(r_task, r_tom, config: IntrinsicConfig):
    """r = r_task + lambda * clamp(r_tom, -clip, 0); accepte scalaires ou tableaux numpy."""
    lam = config.tom_lambda
    if lam == 0.0:
        return r_task
    low = -config.tom_clip if config.tom_clip is not None else -np.inf
    return r_task + lam * np.clip(r_tom, low, 0.0)
