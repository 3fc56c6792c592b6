from __future__ import annotations
import logging
import warnings
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from core.storage.csv_store import read_metrics, read_provenance  # noqa: E402

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
POPULATIONS = (("good", "mean_ep_reward_good", "Good agents"),
               ("adv", "mean_ep_reward_adv", "Adversary"))


def find_metrics_files(paths: Sequence[PathLike]) -> List[Path]:
    files: List[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.rglob("metrics.csv")))
        elif p.is_file():
            files.append(p)
    return files


def _label(path: Path) -> str:
    row = read_provenance(path).get("row")
    return row or path.parent.parent.name or path.stem


def seed_average(series: Sequence[Tuple[np.ndarray, np.ndarray]]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Aligne les courbes sur les env_steps communs; moyenne et écart-type (ddof=0) entre graines."""
    common = series[0][0]
    for x, _ in series[1:]:
        common = np.intersect1d(common, x)
    ys = np.stack([y[np.searchsorted(x, common)] for x, y in series])
    with warnings.catch_warnings():
        # une mise à jour sans épisode terminé vaut NaN
        warnings.simplefilter("ignore", category=RuntimeWarning)
        mean = np.nanmean(ys, axis=0)
        std = np.nanstd(ys, axis=0)
    return common, mean, std


def plot_curves(paths: Sequence[PathLike], out_dir: PathLike) -> List[Path]:
    """Courbes récompense vs pas d'environnement, une figure par population."""
    files = find_metrics_files(paths)
    if not files:
        raise FileNotFoundError(f"no metrics CSV found in {[str(p) for p in paths]}")

    # lecture complète avant toute écriture: un CSV invalide ne laisse aucune image
    grouped: Dict[str, List[Dict[str, np.ndarray]]] = defaultdict(list)
    for f in files:
        rows = read_metrics(f)
        cols = {k: np.array([r[k] for r in rows]) for k in ("env_steps", "mean_ep_reward_good", "mean_ep_reward_adv")}
        grouped[_label(f)].append(cols)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    for key, column, title in POPULATIONS:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for label in sorted(grouped):
            runs = grouped[label]
            x, mean, std = seed_average([(r["env_steps"], r[column]) for r in runs])
            ax.plot(x, mean, label=f"{label} ({len(runs)} seed{'s' if len(runs) > 1 else ''})")
            if len(runs) > 1:
                ax.fill_between(x, mean - std, mean + std, alpha=0.2)
        ax.set_title(f"{title}: mean episode reward")
        ax.set_xlabel("environment steps")
        ax.set_ylabel("episode reward")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = out_dir / f"curves_{key}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
        logger.info("wrote %s", path)
    return written
