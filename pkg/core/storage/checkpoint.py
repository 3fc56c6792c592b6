from __future__ import annotations
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Tuple, Union

import torch

from core.models.training import PolicyConfig
from core.networks.belief_policy import BeliefPolicy
from core.networks.club import GaussianConditional

FORMAT_VERSION = 1


@dataclass
class LoadedCheckpoint:
    policies: Dict[str, BeliefPolicy]
    var_models: Dict[str, GaussianConditional]
    meta: Dict[str, Any] = field(default_factory=dict)


def save_checkpoint(path: Union[str, Path],
                    slots: Mapping[str, Tuple[BeliefPolicy, GaussianConditional]],
                    meta: Mapping[str, Any] = ()) -> Path:
    """
    Archive torch.save: entrées nommées "<role>.policy.<tête>.<param>" et
    "<role>.var.<param>", plus les architectures dans meta.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries: Dict[str, torch.Tensor] = {}
    archs: Dict[str, Dict[str, Any]] = {}
    for role, (policy, var_model) in slots.items():
        for name, tensor in policy.state_dict().items():
            entries[f"{role}.policy.{name}"] = tensor.detach().clone()
        for name, tensor in var_model.state_dict().items():
            entries[f"{role}.var.{name}"] = tensor.detach().clone()
        archs[role] = {
            "policy": policy.config.model_dump(),
            "var": {
                "belief_dim": var_model.belief_dim,
                "residual_dim": var_model.residual_dim,
                "hidden_dim": var_model.mean_net[0].out_features,
            },
        }
    torch.save(
        {"format_version": FORMAT_VERSION, "entries": entries, "archs": archs, "meta": dict(meta)},
        path,
    )
    return path


def load_checkpoint(path: Union[str, Path]) -> LoadedCheckpoint:
    blob = torch.load(Path(path), map_location="cpu", weights_only=False)
    version = blob.get("format_version")
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format {version!r} (expected {FORMAT_VERSION})")
    entries: Dict[str, torch.Tensor] = blob["entries"]
    policies: Dict[str, BeliefPolicy] = {}
    var_models: Dict[str, GaussianConditional] = {}
    for role, arch in blob["archs"].items():
        policy = BeliefPolicy(PolicyConfig(**arch["policy"]))
        prefix = f"{role}.policy."
        policy.load_state_dict({k[len(prefix):]: v for k, v in entries.items() if k.startswith(prefix)})
        var_model = GaussianConditional(**arch["var"])
        prefix = f"{role}.var."
        var_model.load_state_dict({k[len(prefix):]: v for k, v in entries.items() if k.startswith(prefix)})
        policies[role] = policy
        var_models[role] = var_model
    return LoadedCheckpoint(policies, var_models, dict(blob.get("meta", {})))
