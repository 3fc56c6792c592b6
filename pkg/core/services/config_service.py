"""
Fichier d'expérience "clé=valeur" à plat.

    # commentaire
    row=second_order_good
    n_landmarks=2          (EnvConfig)
    epsilon=0.2            (TrainConfig)
    seeds=0,1,2
    good_tom_lambda=0.1    (IntrinsicConfig des bons agents)
    adv_tom_clip=10.0      (IntrinsicConfig de l'adversaire)
"""
from __future__ import annotations
import hashlib
import typing
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import TypeAdapter, ValidationError

from core.errors import ConfigError
from core.models.env import EnvConfig
from core.models.experiment import ExperimentConfig
from core.models.training import IntrinsicConfig, TrainConfig

_SECTIONS = (("env", EnvConfig, ""), ("train", TrainConfig, ""),
             ("good", IntrinsicConfig, "good_"), ("adv", IntrinsicConfig, "adv_"))
_TOP_LEVEL = ("row", "eval_episodes")
_NONE_WORDS = {"", "none", "null"}


def _key_index() -> Dict[str, Tuple[Optional[str], str, Any]]:
    index: Dict[str, Tuple[Optional[str], str, Any]] = {
        name: (None, name, ExperimentConfig.model_fields[name].annotation) for name in _TOP_LEVEL
    }
    for section, model, prefix in _SECTIONS:
        for name, info in model.model_fields.items():
            index[prefix + name] = (section, name, info.annotation)
    return index


KEY_INDEX = _key_index()


def _type_name(annotation: Any) -> str:
    args = [a for a in typing.get_args(annotation) if a is not type(None)]
    origin = typing.get_origin(annotation)
    if origin is typing.Literal:
        return "one of " + "|".join(str(a) for a in typing.get_args(annotation))
    if origin is Union and args:
        return " or ".join(_type_name(a) for a in args) + " or none"
    if origin in (list, List) and args:
        return f"comma-separated list of {_type_name(args[0])}"
    return getattr(annotation, "__name__", str(annotation))


def _allows_none(annotation: Any) -> bool:
    return type(None) in typing.get_args(annotation)


def _convert(key: str, raw: str, annotation: Any) -> Any:
    value: Any = raw
    if raw.lower() in _NONE_WORDS and _allows_none(annotation):
        return None
    if typing.get_origin(annotation) in (list, List):
        value = [part.strip() for part in raw.split(",") if part.strip()]
    try:
        return TypeAdapter(annotation).validate_python(value)
    except ValidationError:
        raise ConfigError(key, f"expected {_type_name(annotation)}, got {raw!r}") from None


def _flat_key(loc: tuple) -> str:
    if not loc:
        return "<config>"
    if loc[0] in _TOP_LEVEL:
        return str(loc[0])
    for section, _, prefix in _SECTIONS:
        if loc[0] == section and len(loc) > 1:
            return prefix + str(loc[1])
    return ".".join(str(p) for p in loc)


def parse_config(text: str) -> ExperimentConfig:
    """Valide le texte et complète toutes les valeurs par défaut."""
    top: Dict[str, Any] = {}
    sections: Dict[str, Dict[str, Any]] = {s: {} for s, _, _ in _SECTIONS}
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in KEY_INDEX:
            raise ConfigError(key, "unknown key")
        if key in seen:
            raise ConfigError(key, "duplicate key")
        seen.add(key)
        section, name, annotation = KEY_INDEX[key]
        value = _convert(key, raw, annotation)
        if section is None:
            top[name] = value
        else:
            sections[section][name] = value
    try:
        return ExperimentConfig(**top, **sections)
    except ValidationError as exc:
        err = exc.errors()[0]
        raise ConfigError(_flat_key(tuple(err.get("loc", ()))), err.get("msg", "invalid value")) from None


def load_config(path: Optional[Union[str, Path]]) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return parse_config(Path(path).read_text(encoding="utf-8"))


def _format_value(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(config: ExperimentConfig) -> str:
    lines: List[str] = []
    for key, (section, name, _) in KEY_INDEX.items():
        holder = config if section is None else getattr(config, section)
        lines.append(f"{key}={_format_value(getattr(holder, name))}")
    return "\n".join(lines) + "\n"


def config_digest(config: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(config).encode("utf-8")).hexdigest()[:16]
