"""
Grille d'expériences: 4 configurations de croyances x graines.
Chaque cellule = entraînement alterné + évaluation sur eval_episodes épisodes.
"""
from __future__ import annotations
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from core.models.experiment import GRID_ROWS, ROW_FLAGS, CellResult, ExperimentConfig, RowSummary
from core.services.config_service import config_digest, serialize_config
from core.services.evaluation_service import evaluate_policy
from core.services.trainer_service import TrainerService
from core.storage.csv_store import MetricsWriter, write_results_table
from core.storage.json_repo import JsonRepository

logger = logging.getLogger(__name__)

ROOT_DIR = Path(__file__).resolve().parents[2]
TEMPLATES_DIR = ROOT_DIR / "templates" / "report"


def provenance_lines(config: ExperimentConfig, seed: int) -> List[str]:
    import torch

    train = config.train
    lines = [
        f"seed={seed}",
        f"config_digest={config_digest(config)}",
        "optimizer=adam",
        f"n_envs={train.n_envs}",
        f"minibatches={train.minibatches}",
        f"torch={torch.__version__}",
    ]
    return lines + serialize_config(config).splitlines()


def run_cell(config: ExperimentConfig, seed: int, cell_dir: Union[str, Path]) -> CellResult:
    """Entraîne puis évalue une cellule; écrit metrics.csv et les checkpoints dans cell_dir."""
    cell_dir = Path(cell_dir)
    metrics = MetricsWriter(cell_dir / "metrics.csv", provenance_lines(config, seed))
    trainer = TrainerService(config, seed)
    result = trainer.train_alternating(cell_dir, on_record=metrics.write)
    good, adv = result.slots["good"], result.slots["adversary"]
    evaluation = evaluate_policy(good.policy, adv.policy, config.env, config.eval_episodes, seed,
                                 dump_dir=cell_dir / "trajectories")
    return CellResult(
        cell_id=f"{config.row}/seed_{seed}",
        config_digest=config_digest(config),
        row=config.row,
        seed=seed,
        mean_good=evaluation.mean_good,
        var_good=evaluation.var_good,
        mean_adv=evaluation.mean_adv,
        var_adv=evaluation.var_adv,
        metrics_path=str(cell_dir / "metrics.csv"),
        checkpoint_path=str(result.checkpoints[-1]) if result.checkpoints else None,
    )


def _pooled(means: np.ndarray, variances: np.ndarray):
    """Moyenne sur graines, variance épisode poolée, erreur-type inter-graines."""
    mean = float(means.mean())
    var = float(variances.mean() + means.var())
    stderr = float(means.std(ddof=1) / math.sqrt(len(means))) if len(means) > 1 else 0.0
    return mean, var, stderr


def summarize(row: str, cells: Sequence[CellResult]) -> RowSummary:
    fo_good, fo_adv, so_good, so_adv = ROW_FLAGS[row]
    good = _pooled(np.array([c.mean_good for c in cells]), np.array([c.var_good for c in cells]))
    adv = _pooled(np.array([c.mean_adv for c in cells]), np.array([c.var_adv for c in cells]))
    return RowSummary(
        row=row,
        first_order_good=fo_good, first_order_adv=fo_adv,
        second_order_good=so_good, second_order_adv=so_adv,
        reward_good=good[0], var_good=good[1], stderr_good=good[2],
        reward_adv=adv[0], var_adv=adv[1], stderr_adv=adv[2],
        n_seeds=len(cells),
    )


@dataclass
class DirectionalCheck:
    label: str
    population: str
    treated: float
    baseline: float
    margin: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.margin > self.threshold


def directional_checks(summaries: Dict[str, RowSummary]) -> List[DirectionalCheck]:
    """2nd ordre (bons) vs baseline côté bons, 2nd ordre (adv) vs baseline côté adversaire."""
    checks: List[DirectionalCheck] = []
    base = summaries.get("baseline")
    if base is None:
        return checks
    pairs = (("second_order_good", "good", "reward_good", "stderr_good"),
             ("second_order_adv", "adversary", "reward_adv", "stderr_adv"))
    for row, population, reward, stderr in pairs:
        treated = summaries.get(row)
        if treated is None:
            continue
        a, b = getattr(treated, reward), getattr(base, reward)
        # erreur-type de la différence
        threshold = math.hypot(getattr(treated, stderr), getattr(base, stderr))
        checks.append(DirectionalCheck(f"{row} vs baseline", population, a, b, a - b, threshold))
    return checks


class GridService:
    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.registry: JsonRepository[CellResult] = JsonRepository(
            self.out_dir / "cells.json", entity_name="grid cell", key="cell_id", backup_keep=3
        )

    def run_grid(self, config: ExperimentConfig, seeds: Optional[Sequence[int]] = None,
                 rows: Optional[Sequence[str]] = None, steps: Optional[int] = None) -> List[RowSummary]:
        seeds = list(seeds) if seeds else list(config.train.seeds)
        rows = list(rows) if rows else list(GRID_ROWS)
        summaries: Dict[str, RowSummary] = {}
        for row in rows:
            cfg = config.with_row(row).with_steps(steps)
            digest = config_digest(cfg)
            cells: List[CellResult] = []
            for seed in seeds:
                cell_id = f"{row}/seed_{seed}"
                existing = self.registry.get_by_id(cell_id)
                if existing and existing.get("config_digest") == digest:
                    logger.warning("cell %s already complete, skipped", cell_id)
                    cells.append(CellResult(**existing))
                    continue
                logger.info("grid cell %s (%d steps)", cell_id, cfg.train.total_steps)
                cell = run_cell(cfg, seed, self.out_dir / row / f"seed_{seed}")
                # persistance immédiate: un abandon garde les cellules finies
                self.registry.upsert(cell)
                cells.append(cell)
            summaries[row] = summarize(row, cells)

        ordered = [summaries[r] for r in rows]
        provenance = [f"seeds={','.join(str(s) for s in seeds)}"] + serialize_config(config.with_steps(steps)).splitlines()
        write_results_table(self.out_dir / "results.csv", ordered, provenance)
        checks = directional_checks(summaries)
        for check in checks:
            if not check.passed:
                logger.warning("directional check failed: %s (margin %.4f <= %.4f)",
                               check.label, check.margin, check.threshold)
        self.render_report(ordered, checks, provenance)
        return ordered

    def render_report(self, summaries: Sequence[RowSummary], checks: Sequence[DirectionalCheck],
                      provenance: Sequence[str]) -> Path:
        """Rend le rapport HTML via Jinja2: templates/report/results.html"""
        from jinja2 import Environment, FileSystemLoader, select_autoescape

        env = Environment(
            loader=FileSystemLoader(str(TEMPLATES_DIR)),
            autoescape=select_autoescape(["html", "xml"]),
        )
        html = env.get_template("results.html").render(
            rows=[s.model_dump() for s in summaries],
            checks=[{"label": c.label, "population": c.population, "treated": c.treated,
                     "baseline": c.baseline, "margin": c.margin, "threshold": c.threshold,
                     "passed": c.passed} for c in checks],
            provenance=list(provenance),
        )
        path = self.out_dir / "report.html"
        path.write_text(html, encoding="utf-8")
        return path
