"""
Borne supérieure contrastive (log-ratio) de l'information mutuelle I(B; Z).

q(z|b) est une gaussienne diagonale dont moyenne et log-variance sont
produites par deux petits MLP. Le terme marginal utilise l'appariement
complet M x M, calculé en forme fermée (moyenne et variance de z sur le lot).
"""
from __future__ import annotations
import math
from typing import Optional, Tuple

import torch
from torch import Tensor, nn

from core.errors import DimensionError, NonFiniteError
from core.networks.belief_policy import mlp

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0
_LOG_2PI = math.log(2.0 * math.pi)


class GaussianConditional(nn.Module):
    """Modèle variationnel q_theta(z | b)."""

    def __init__(self, belief_dim: int, residual_dim: int, hidden_dim: int = 64):
        super().__init__()
        self.belief_dim = belief_dim
        self.residual_dim = residual_dim
        self.mean_net = mlp(belief_dim, residual_dim, hidden_dim, 2, activation=nn.ReLU)
        self.logvar_net = mlp(belief_dim, residual_dim, hidden_dim, 2, activation=nn.ReLU)

    def forward(self, b: Tensor) -> Tuple[Tensor, Tensor]:
        if b.shape[-1] != self.belief_dim:
            raise DimensionError(f"belief width {b.shape[-1]} != {self.belief_dim}")
        logvar = self.logvar_net(b).clamp(LOGVAR_MIN, LOGVAR_MAX)
        return self.mean_net(b), logvar


def cond_log_likelihood(model: GaussianConditional, b: Tensor, z: Tensor) -> Tensor:
    """log q(z|b), une valeur par échantillon."""
    if z.shape[-1] != model.residual_dim:
        raise DimensionError(f"residual width {z.shape[-1]} != {model.residual_dim}")
    mean, logvar = model(b)
    return -0.5 * (_LOG_2PI + logvar + (z - mean) ** 2 / logvar.exp()).sum(dim=-1)


def club_estimate(model: GaussianConditional, b: Tensor, z: Tensor) -> Tensor:
    """(1/M) sum_i log q(z_i|b_i) - (1/M^2) sum_i sum_j log q(z_j|b_i)."""
    if b.dim() != 2 or z.dim() != 2 or b.shape[0] != z.shape[0]:
        raise DimensionError("club_estimate expects row-aligned (M, dim) batches")
    if b.shape[0] < 2:
        raise DimensionError("club_estimate needs at least 2 samples")
    joint = cond_log_likelihood(model, b, z).mean()

    mean, logvar = model(b)
    z_mean = z.mean(dim=0)
    z_var = ((z - z_mean) ** 2).mean(dim=0)
    # E_j (z_j - mu_i)^2 = Var(z) + (E z - mu_i)^2
    spread = z_var + (z_mean - mean) ** 2
    marginal = (-0.5 * (_LOG_2PI + logvar + spread / logvar.exp()).sum(dim=-1)).mean()
    return joint - marginal


def variational_loss(model: GaussianConditional, b: Tensor, z: Tensor) -> Tensor:
    return -cond_log_likelihood(model, b, z).mean()


def variational_update(model: GaussianConditional, optimizer: torch.optim.Optimizer,
                       b: Tensor, z: Tensor, lr: Optional[float] = None) -> float:
    """Un pas de gradient sur L_q(theta); b et z sont traités comme des données."""
    if lr is not None:
        if lr < 0:
            raise ValueError("lr must be non-negative")
        for group in optimizer.param_groups:
            group["lr"] = lr
    optimizer.zero_grad(set_to_none=True)
    loss = variational_loss(model, b.detach(), z.detach())
    loss.backward()
    for name, p in model.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            raise NonFiniteError("variational gradient", f"parameter {name}, loss={loss.item():.6g}")
    optimizer.step()
    return float(loss.item())


def make_variational_optimizer(model: GaussianConditional, lr: float) -> torch.optim.Optimizer:
    return torch.optim.Adam(model.parameters(), lr=lr)
