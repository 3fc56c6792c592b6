from __future__ import annotations
import csv
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from core.errors import MetricsFormatError
from core.models.experiment import RowSummary
from core.models.training import METRICS_COLUMNS, MetricsRecord

PathLike = Union[str, Path]


def _fmt(value) -> str:
    # repr() garde tous les bits d'un float; CSV relisible à l'identique
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_provenance(fh, provenance: Iterable[str]) -> None:
    for line in provenance:
        for sub in str(line).splitlines():
            fh.write(f"# {sub}\n")


def _frame(rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> pd.DataFrame:
    df = pd.DataFrame(list(rows), columns=list(columns))
    for name in df.select_dtypes(include="bool").columns:
        df[name] = df[name].map({True: "true", False: "false"})
    return df


def _to_csv(df: pd.DataFrame, fh, header: bool) -> None:
    df.to_csv(fh, index=False, header=header, na_rep="nan", lineterminator="\n")


# ---------------- Métriques d'entraînement ---------------- #

class MetricsWriter:
    """CSV append-only, une ligne par mise à jour de politique."""

    def __init__(self, path: PathLike, provenance: Sequence[str] = ()):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("w", encoding="utf-8", newline="") as fh:
            _write_provenance(fh, provenance)
            _to_csv(_frame([], METRICS_COLUMNS), fh, header=True)
        self.count = 0

    def write(self, record: MetricsRecord) -> None:
        with self.path.open("a", encoding="utf-8", newline="") as fh:
            _to_csv(_frame([record.model_dump()], METRICS_COLUMNS), fh, header=False)
        self.count += 1


def read_provenance(path: PathLike) -> Dict[str, str]:
    """Lignes "# clé=valeur" de l'en-tête."""
    out: Dict[str, str] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                k, v = body.split("=", 1)
                out.setdefault(k.strip(), v.strip())
    return out


def read_metrics(path: PathLike) -> List[Dict[str, float]]:
    path = Path(path)
    rows: List[Dict[str, float]] = []
    header: Optional[List[str]] = None
    with path.open("r", encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = next(csv.reader([line]))
            if header is None:
                missing = [c for c in ("env_steps", "mean_ep_reward_good", "mean_ep_reward_adv") if c not in cells]
                if missing:
                    raise MetricsFormatError(str(path), lineno, f"missing columns {missing}")
                header = cells
                continue
            if len(cells) != len(header):
                raise MetricsFormatError(str(path), lineno, f"expected {len(header)} fields, got {len(cells)}")
            row: Dict[str, float] = {}
            for name, cell in zip(header, cells):
                if name == "population":
                    continue
                try:
                    row[name] = float(cell)
                except ValueError:
                    raise MetricsFormatError(str(path), lineno, f"bad number {cell!r} in column {name}") from None
            rows.append(row)
    if header is None:
        raise MetricsFormatError(str(path), 1, "no header row")
    return rows


# ---------------- Trajectoires ---------------- #

class TrajectoryWriter:
    """
    Une ligne par pas de temps:
    t, x0, y0, ..., a0, ..., r0, ..., target_index  (agent 0 = adversaire)
    """

    def __init__(self, path: PathLike, n_agents: int):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.n_agents = n_agents
        header = ["t"]
        for k in range(n_agents):
            header += [f"x{k}", f"y{k}"]
        header += [f"a{k}" for k in range(n_agents)]
        header += [f"r{k}" for k in range(n_agents)]
        header.append("target_index")
        self._fh = self.path.open("w", encoding="utf-8", newline="")
        self._fh.write(",".join(header) + "\n")

        self._fh = self.path.open("w", encoding="utf-8", newline="")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(header)

    def write(self, t: int, positions: np.ndarray, actions: Sequence[int],
              rewards: Sequence[float], target_index: int) -> None:
        cells = [str(t)]
        cells += [_fmt(v) for v in np.asarray(positions, dtype=np.float64).reshape(-1)]
        cells += [str(int(a)) for a in actions]
        cells += [_fmt(float(r)) for r in rewards]
        cells.append(str(int(target_index)))
        self._csv.writerow(cells)

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "TrajectoryWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


# ---------------- Tableau de résultats ---------------- #

RESULT_COLUMNS = [
    "row", "first_order_good", "first_order_adv", "second_order_good", "second_order_adv",
    "reward_good", "var_good", "stderr_good", "reward_adv", "var_adv", "stderr_adv", "n_seeds",
]


def write_results_table(path: PathLike, summaries: Sequence[RowSummary], provenance: Sequence[str] = ()) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        _write_provenance(fh, provenance)
        _to_csv(_frame([s.model_dump() for s in summaries], RESULT_COLUMNS), fh, header=True)
    return path
