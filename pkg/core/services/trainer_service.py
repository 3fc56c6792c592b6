"""
Entraînement MAPPO alterné: une population apprend pendant que l'autre
reste figée, échange tous les swap_interval pas d'environnement.
"""
from __future__ import annotations
import contextlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np
import torch
from torch import Tensor, nn

from core.errors import NonFiniteError, TrainingAbortedError
from core.models.experiment import ExperimentConfig
from core.models.training import MetricsRecord, PolicyConfig, PopulationSettings, Role, TrainConfig
from core.networks.belief_policy import (
    BeliefPolicy,
    PolicyOutput,
    action_entropy,
    action_log_prob,
    belief_loss,
    second_order_loss,
)
from core.networks.club import GaussianConditional, club_estimate, make_variational_optimizer, variational_update
from core.services.rollout import MiniBatch, RolloutBuffer, WorldPool, collect_rollouts
from core.storage.checkpoint import save_checkpoint

logger = logging.getLogger(__name__)

ROLES: tuple = ("good", "adversary")


# ---------------- Pertes ---------------- #

class PPOTerms(NamedTuple):
    loss: Tensor
    surrogate: Tensor
    value_loss: Tensor
    entropy: Tensor


class LossTerms(NamedTuple):
    total: Tensor
    ppo: PPOTerms
    belief: Tensor
    residual: Tensor
    second_order: Tensor


def clipped_surrogate(ratio: Tensor, advantages: Tensor, epsilon: float) -> Tensor:
    """min(r A, clip(r, 1-eps, 1+eps) A), élément par élément."""
    return torch.min(ratio * advantages, ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantages)


def ppo_clip_loss(policy: BeliefPolicy, batch: MiniBatch, config: TrainConfig,
                  output: Optional[PolicyOutput] = None, advantages: Optional[Tensor] = None) -> PPOTerms:
    out = output if output is not None else policy(batch.obs, batch.critic_obs)
    adv = batch.advantages if advantages is None else advantages
    new_logp = action_log_prob(out, batch.actions)
    ratio = (new_logp - batch.old_log_probs).exp()
    bad = ~torch.isfinite(ratio)
    if bad.any():
        idx = int(bad.nonzero()[0, 0])
        raise NonFiniteError("PPO ratio", f"index {idx}")
    surrogate = clipped_surrogate(ratio, adv, config.epsilon).mean()
    if out.value is not None:
        value_loss = 0.5 * ((batch.returns - out.value) ** 2).mean()
    else:
        value_loss = torch.zeros((), dtype=ratio.dtype)
    entropy = action_entropy(out).mean()
    loss = -surrogate + config.value_coef * value_loss - config.entropy_coef * entropy
    return PPOTerms(loss, surrogate, value_loss, entropy)


@contextlib.contextmanager
def frozen(module: nn.Module):
    """Paramètres exclus du graphe le temps du bloc (theta figé pour L_residual)."""
    flags = [p.requires_grad for p in module.parameters()]
    for p in module.parameters():
        p.requires_grad_(False)
    try:
        yield module
    finally:
        for p, flag in zip(module.parameters(), flags):
            p.requires_grad_(flag)


def residual_loss(var_model: GaussianConditional, output: PolicyOutput) -> Tensor:
    """CLUB avec theta figé; b détaché pour ne pas toucher belief_head."""
    b = output.belief.as_vector().detach()
    with frozen(var_model):
        return club_estimate(var_model, b, output.residual)


def total_policy_loss(policy: BeliefPolicy, var_model: GaussianConditional, batch: MiniBatch,
                      settings: PopulationSettings, config: TrainConfig,
                      advantages: Optional[Tensor] = None) -> LossTerms:
    out = policy(batch.obs, batch.critic_obs)
    ppo = ppo_clip_loss(policy, batch, config, output=out, advantages=advantages)
    l_belief = belief_loss(out.belief, batch.truths)
    l_residual = residual_loss(var_model, out) if batch.size >= 2 else torch.zeros((), dtype=l_belief.dtype)
    l_second = second_order_loss(out.second_order, batch.actuals, batch.self_index)

    total = config.alpha * ppo.loss
    # poids nuls: terme omis (valeur gardée pour les métriques)
    for weight, term in ((settings.beta, l_belief), (settings.gamma, l_residual),
                         (settings.second_order_coef, l_second)):
        if weight:
            total = total + weight * term
    return LossTerms(total, ppo, l_belief, l_residual, l_second)


# ---------------- Population ---------------- #

@dataclass
class UpdateStats:
    L_ppo: float = 0.0
    L_belief: float = 0.0
    L_residual: float = 0.0
    L_q: float = 0.0
    L_2nd_order: float = 0.0


@dataclass
class PopulationSlot:
    role: Role
    policy: BeliefPolicy
    var_model: GaussianConditional
    settings: PopulationSettings


class PopulationTrainer:
    """Optimise une population (politique + q) sur ses propres buffers."""

    def __init__(self, slot: PopulationSlot, config: TrainConfig, n_landmarks: int):
        self.slot = slot
        self.config = config
        self.n_landmarks = n_landmarks
        self.optimizer = torch.optim.Adam(slot.policy.parameters(), lr=config.lr)
        self.var_optimizer = make_variational_optimizer(slot.var_model, config.var_lr)
        self.updates = 0

    def _clip(self) -> None:
        if self.config.max_grad_norm is None:
            return
        # une échelle par tête: les têtes ne partagent jamais leur norme
        for params in self.slot.policy.head_parameters().values():
            nn.utils.clip_grad_norm_(params, self.config.max_grad_norm)

    def update(self, buffer: RolloutBuffer, generator: torch.Generator) -> UpdateStats:
        cfg = self.config
        policy, var_model = self.slot.policy, self.slot.var_model
        data = buffer.compute_advantages(cfg).to_batch(self.n_landmarks)
        n = data.size
        mb_size = max(1, math.ceil(n / cfg.minibatches))
        var_steps = cfg.var_steps_warmup if self.updates < cfg.var_warmup_updates else cfg.var_steps
        sums = UpdateStats()
        count = 0
        for _ in range(cfg.epochs):
            perm = torch.randperm(n, generator=generator)
            for start in range(0, n, mb_size):
                batch = data.select(perm[start:start + mb_size])
                adv = batch.advantages
                if cfg.normalize_advantages and batch.size > 1:
                    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
                terms = total_policy_loss(policy, var_model, batch, self.slot.settings, cfg, advantages=adv)
                if not torch.isfinite(terms.total):
                    raise NonFiniteError("policy loss", f"update {self.updates}")
                self.optimizer.zero_grad(set_to_none=True)
                terms.total.backward()
                self._clip()
                self.optimizer.step()

                l_q = float("nan")
                if var_steps and batch.size >= 2:
                    with torch.no_grad():
                        out = policy(batch.obs, batch.critic_obs)
                    b, z = out.belief.as_vector(), out.residual
                    for _ in range(var_steps):
                        l_q = variational_update(var_model, self.var_optimizer, b, z)

                sums.L_ppo += terms.ppo.loss.item()
                sums.L_belief += terms.belief.item()
                sums.L_residual += terms.residual.item()
                sums.L_q += l_q
                sums.L_2nd_order += terms.second_order.item()
                count += 1
        self.updates += 1
        return UpdateStats(**{k: v / max(count, 1) for k, v in vars(sums).items()})


# ---------------- Boucle alternée ---------------- #

@dataclass
class TrainingResult:
    slots: Dict[str, PopulationSlot]
    records: List[MetricsRecord] = field(default_factory=list)
    env_steps: int = 0
    checkpoints: List[Path] = field(default_factory=list)


def build_slot(experiment: ExperimentConfig, role: Role) -> PopulationSlot:
    env, train = experiment.env, experiment.train
    settings = experiment.population_settings(role)
    policy_cfg = PolicyConfig(
        obs_dim=env.obs_dim,
        n_landmarks=env.n_landmarks,
        n_coeffs=int(env.n_good),
        n_agents=env.n_agents,
        hidden_dim=train.hidden_dim,
        hidden_layers=train.hidden_layers,
        residual_dim=train.residual_dim,
        bottleneck=settings.bottleneck,
        actor_sees_second_order=train.actor_sees_second_order,
        critic_input=train.critic_input,
    )
    policy = BeliefPolicy(policy_cfg)
    var_model = GaussianConditional(env.belief_dim, train.residual_dim, train.var_hidden_dim)
    return PopulationSlot(role=role, policy=policy, var_model=var_model, settings=settings)


class TrainerService:
    def __init__(self, experiment: ExperimentConfig, seed: int):
        self.experiment = experiment
        self.seed = int(seed)
        with torch.random.fork_rng():
            torch.manual_seed(self.seed)
            self.slots: Dict[str, PopulationSlot] = {role: build_slot(experiment, role) for role in ROLES}
        self.trainers = {
            role: PopulationTrainer(slot, experiment.train, experiment.env.n_landmarks)
            for role, slot in self.slots.items()
        }
        self.generator = torch.Generator().manual_seed(self.seed)
        self.pool = WorldPool(experiment.env, experiment.train.n_envs, self.seed)

    def _checkpoint(self, out_dir: Optional[Path], name: str, env_steps: int) -> Optional[Path]:
        if out_dir is None:
            return None
        slots = {role: (s.policy, s.var_model) for role, s in self.slots.items()}
        meta = {"seed": self.seed, "env_steps": env_steps, "row": self.experiment.row}
        return save_checkpoint(Path(out_dir) / "checkpoints" / f"{name}.pt", slots, meta)

    def train_alternating(self, out_dir: Optional[Path] = None,
                          on_record: Optional[Callable[[MetricsRecord], None]] = None) -> TrainingResult:
        train = self.experiment.train
        n_updates = max(1, train.total_steps // train.steps_per_update)
        settings = {role: slot.settings for role, slot in self.slots.items()}
        policies = {role: slot.policy for role, slot in self.slots.items()}
        result = TrainingResult(slots=self.slots)
        env_steps = 0
        active: Optional[str] = None

        for update in range(n_updates):
            role = ROLES[(env_steps // train.swap_interval) % 2]
            if role != active:
                if active is not None:
                    logger.info("swap at %d env steps: %s -> %s", env_steps, active, role)
                    ckpt = self._checkpoint(out_dir, f"swap_{env_steps}", env_steps)
                    if ckpt:
                        result.checkpoints.append(ckpt)
                active = role

            env_steps += train.steps_per_update
            try:
                rollout = collect_rollouts(self.pool, policies, settings, train, self.generator)
                buffer = rollout.buffers[role]
                stats = self.trainers[role].update(buffer, self.generator)
            except NonFiniteError as exc:
                ckpt = self._checkpoint(out_dir, "abort", env_steps)
                raise TrainingAbortedError(f"training aborted at update {update}: {exc}",
                                           str(ckpt) if ckpt else None) from exc

            record = MetricsRecord(
                update_index=update,
                env_steps=env_steps,
                population=role,
                mean_ep_reward_good=rollout.mean_episode_reward(0),
                mean_ep_reward_adv=rollout.mean_episode_reward(1),
                r_tom_mean=float(np.mean(buffer.int_rewards)),
                **vars(stats),
            )
            logger.info(
                "update %d steps=%d pop=%s good=%.3f adv=%.3f L_ppo=%.4f L_belief=%.4f",
                update, env_steps, role, record.mean_ep_reward_good, record.mean_ep_reward_adv,
                record.L_ppo, record.L_belief,
            )
            result.records.append(record)
            if on_record is not None:
                on_record(record)

        result.env_steps = env_steps
        final = self._checkpoint(out_dir, "final", env_steps)
        if final:
            result.checkpoints.append(final)
        return result
