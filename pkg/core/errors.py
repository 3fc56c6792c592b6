from __future__ import annotations
from typing import Optional


class ConfigError(ValueError):
    """Clé inconnue ou valeur invalide dans un fichier d'expérience."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class DimensionError(ValueError):
    pass


class EpisodeFinishedError(RuntimeError):
    def __init__(self, message: str = "episode finished"):
        super().__init__(message)


class NonFiniteError(FloatingPointError):
    """Valeur NaN/inf détectée (ratio PPO, gradient, perte)."""

    def __init__(self, what: str, detail: str = ""):
        msg = f"non-finite {what}" + (f" ({detail})" if detail else "")
        super().__init__(msg)
        self.what = what
        self.detail = detail


class TrainingAbortedError(RuntimeError):
    def __init__(self, message: str, checkpoint: Optional[str] = None):
        super().__init__(message if not checkpoint else f"{message} (checkpoint: {checkpoint})")
        self.checkpoint = checkpoint


class MetricsFormatError(ValueError):
    def __init__(self, path: str, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line
