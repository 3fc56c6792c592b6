"""
Politique acteur-critique à goulot de croyances.

    obs ──► belief_head ──► b (cible: softmax, coefficients: sigmoïde)
     │                      │ (gradient bloqué vers l'acteur)
     ├──► residual_net ──► z
     ├──► second_order_head ──► f(x) ──► B = [b + f(x)_i]_i (b bloqué)
     └──► actor(b, z) / critic(b, z)

Les paramètres de belief_head ne reçoivent du gradient que de la perte
supervisée de croyance.
"""
from __future__ import annotations
from typing import Dict, Iterator, NamedTuple, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor, nn

from core.errors import DimensionError, NonFiniteError
from core.models.env import N_ACTIONS, GroundTruthBeliefs
from core.models.training import PolicyConfig

DTYPE = torch.float64
SIMPLEX_TOL = 1e-6
BELIEF_HEAD = "belief_head"
HEADS = (BELIEF_HEAD, "residual_net", "second_order_head", "actor", "critic")


def mlp(in_dim: int, out_dim: int, hidden_dim: int = 64, hidden_layers: int = 2,
        activation: type = nn.Tanh) -> nn.Sequential:
    layers = []
    width = in_dim
    for _ in range(hidden_layers):
        layers += [nn.Linear(width, hidden_dim, dtype=DTYPE), activation()]
        width = hidden_dim
    layers.append(nn.Linear(width, out_dim, dtype=DTYPE))
    return nn.Sequential(*layers)


class BeliefVector(NamedTuple):
    """Croyance de 1er ordre: distribution sur la cible + estimation des coefficients."""
    target_logits: Tensor
    target_dist: Tensor
    coeff_est: Tensor

    @classmethod
    def from_probs(cls, target_dist, coeff_est) -> "BeliefVector":
        p = torch.as_tensor(target_dist, dtype=DTYPE)
        return cls(torch.log(p), p, torch.as_tensor(coeff_est, dtype=DTYPE))

    def as_vector(self) -> Tensor:
        return torch.cat([self.target_dist, self.coeff_est], dim=-1)

    def detach(self) -> "BeliefVector":
        return BeliefVector(*(t.detach() for t in self))


class SecondOrderBeliefs(NamedTuple):
    """Matrice K x dim(b); le bloc cible est gardé en log-probabilités."""
    target_logp: Tensor  # (..., K, N)
    coeff: Tensor        # (..., K, C)

    @property
    def target_dist(self) -> Tensor:
        return self.target_logp.exp()

    def matrix(self) -> Tensor:
        return torch.cat([self.target_dist, self.coeff], dim=-1)


class PolicyOutput(NamedTuple):
    belief: BeliefVector
    residual: Tensor
    second_order: SecondOrderBeliefs
    action_logits: Tensor
    value: Optional[Tensor]


class BeliefPolicy(nn.Module):
    def __init__(self, config: PolicyConfig):
        super().__init__()
        self.config = config
        c = config
        h, n = c.hidden_dim, c.hidden_layers
        self.belief_head = mlp(c.obs_dim, c.belief_dim, h, n)
        self.residual_net = mlp(c.obs_dim, c.residual_dim, h, n)
        self.second_order_head = mlp(c.obs_dim, c.n_agents * c.belief_dim, h, n)
        features = c.belief_dim + c.residual_dim if c.bottleneck else c.obs_dim
        actor_in = features + (c.n_agents * c.belief_dim if c.actor_sees_second_order else 0)
        critic_in = c.n_agents * c.obs_dim if c.critic_input == "global" else features
        self.actor = mlp(actor_in, N_ACTIONS, h, n)
        self.critic = mlp(critic_in, 1, h, n)

    # ---------------- Groupes de paramètres ---------------- #

    def head_parameters(self) -> Dict[str, list]:
        return {name: list(getattr(self, name).parameters()) for name in HEADS}

    def belief_head_parameters(self) -> Iterator[nn.Parameter]:
        return self.belief_head.parameters()

    # ---------------- Passe avant ---------------- #

    def forward(self, obs: Tensor, critic_obs: Optional[Tensor] = None) -> PolicyOutput:
        c = self.config
        if obs.shape[-1] != c.obs_dim:
            raise DimensionError(f"observation width {obs.shape[-1]} != {c.obs_dim}")

        raw = self.belief_head(obs)
        logits, coeff_raw = raw.split([c.n_landmarks, c.n_coeffs], dim=-1)
        belief = BeliefVector(logits, F.softmax(logits, dim=-1), torch.sigmoid(coeff_raw))
        z = self.residual_net(obs)

        # B = b + f(x)_i, b bloqué; bloc discret décalé en espace logit
        offsets = self.second_order_head(obs).unflatten(-1, (c.n_agents, c.belief_dim))
        blocked = belief.detach()
        target_logp = F.log_softmax(
            blocked.target_logits.unsqueeze(-2) + offsets[..., :c.n_landmarks], dim=-1
        )
        coeff = blocked.coeff_est.unsqueeze(-2) + offsets[..., c.n_landmarks:]
        second = SecondOrderBeliefs(target_logp, coeff)

        if c.bottleneck:
            features = torch.cat([blocked.as_vector(), z], dim=-1)
        else:
            features = obs
        actor_in = features
        if c.actor_sees_second_order:
            actor_in = torch.cat([features, second.matrix().detach().flatten(-2)], dim=-1)
        action_logits = self.actor(actor_in)

        value = None
        if c.critic_input == "global":
            if critic_obs is not None:
                value = self.critic(critic_obs).squeeze(-1)
        else:
            value = self.critic(features).squeeze(-1)
        return PolicyOutput(belief, z, second, action_logits, value)

    @torch.no_grad()
    def act(self, obs: Tensor, generator: Optional[torch.Generator] = None,
            deterministic: bool = False, critic_obs: Optional[Tensor] = None
            ) -> Tuple[Tensor, Tensor, PolicyOutput]:
        out = self.forward(obs, critic_obs)
        if not torch.isfinite(out.action_logits).all():
            raise NonFiniteError("action logits")
        if deterministic:
            actions = out.action_logits.argmax(dim=-1)
        else:
            probs = F.softmax(out.action_logits, dim=-1)
            actions = torch.multinomial(probs.reshape(-1, N_ACTIONS), 1, generator=generator)
            actions = actions.reshape(probs.shape[:-1])
        return actions, action_log_prob(out, actions), out


# ---------------- Pertes et log-probabilités ---------------- #

def action_log_prob(output: PolicyOutput, action: Union[int, Tensor]) -> Tensor:
    a = torch.as_tensor(action, dtype=torch.long)
    if a.numel() and (a.min() < 0 or a.max() >= N_ACTIONS):
        raise ValueError(f"action out of range [0, {N_ACTIONS})")
    logp = F.log_softmax(output.action_logits, dim=-1)
    return logp.gather(-1, a.unsqueeze(-1).expand(*logp.shape[:-1], 1)).squeeze(-1)


def action_entropy(output: PolicyOutput) -> Tensor:
    logp = F.log_softmax(output.action_logits, dim=-1)
    return -(logp.exp() * logp).sum(dim=-1)


def _cross_entropy(truth: Tensor, logp: Tensor) -> Tensor:
    # 0 * log 0 = 0 (prédictions exactement one-hot)
    return -torch.where(truth > 0, truth * logp, torch.zeros_like(logp)).sum(dim=-1)


def _check_simplex(dist: Tensor) -> None:
    total = dist.detach().sum(dim=-1)
    if not torch.allclose(total, torch.ones_like(total), atol=SIMPLEX_TOL, rtol=0.0):
        raise ValueError("target distribution is not on the simplex")


def belief_loss(belief: BeliefVector, truth: Union[GroundTruthBeliefs, Tensor, np.ndarray]) -> Tensor:
    """CE(cible) + MSE(coefficients), moyenne sur le lot."""
    n = belief.target_dist.shape[-1]
    if isinstance(truth, GroundTruthBeliefs):
        truth = truth.as_vector()
    truth = torch.as_tensor(truth, dtype=DTYPE)
    if truth.shape[-1] != n + belief.coeff_est.shape[-1]:
        raise DimensionError(f"truth width {truth.shape[-1]} does not match belief")
    _check_simplex(belief.target_dist)
    onehot, coeffs = truth[..., :n], truth[..., n:]
    ce = _cross_entropy(onehot, F.log_softmax(belief.target_logits, dim=-1))
    mse = ((belief.coeff_est - coeffs) ** 2).mean(dim=-1)
    return (ce + mse).mean()


def second_order_loss(pred: SecondOrderBeliefs, actuals: BeliefVector,
                      self_index: Optional[Union[int, Tensor]] = None,
                      reduction: str = "mean") -> Tensor:
    """
    Erreur de prédiction des croyances des autres agents.
    actuals: croyances réelles (..., K, ·), traitées comme constantes.
    self_index: ligne de l'agent lui-même, exclue du score (None = toutes les lignes).
    """
    k = pred.target_logp.shape[-2]
    if actuals.target_dist.shape[-2] != k or actuals.coeff_est.shape[-2] != k:
        raise DimensionError(f"expected {k} actual beliefs, got {actuals.target_dist.shape[-2]}")
    actual_dist = actuals.target_dist.detach()
    actual_coeff = actuals.coeff_est.detach()
    per_agent = _cross_entropy(actual_dist, pred.target_logp)
    per_agent = per_agent + ((pred.coeff - actual_coeff) ** 2).mean(dim=-1)
    if self_index is None:
        loss = per_agent.mean(dim=-1)
    else:
        idx = torch.as_tensor(self_index, dtype=torch.long)
        mask = 1.0 - F.one_hot(idx, k).to(DTYPE)
        mask = mask.expand_as(per_agent)
        loss = (per_agent * mask).sum(dim=-1) / mask.sum(dim=-1)
    if reduction == "none":
        return loss
    return loss.mean()
