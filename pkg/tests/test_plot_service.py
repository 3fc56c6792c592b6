import numpy as np
import pytest

from core.errors import MetricsFormatError
from core.models.training import MetricsRecord
from core.services.plot_service import find_metrics_files, plot_curves, seed_average
from core.storage.csv_store import MetricsWriter


def _write_run(path, row, rewards, steps=100):
    writer = MetricsWriter(path, [f"row={row}", "seed=0"])
    for i, r in enumerate(rewards):
        writer.write(MetricsRecord(update_index=i, env_steps=steps * (i + 1), population="good",
                                   mean_ep_reward_good=r, mean_ep_reward_adv=-r, L_ppo=0.0, L_belief=0.0,
                                   L_residual=0.0, L_q=0.0, L_2nd_order=0.0, r_tom_mean=0.0))
    return path


def test_five_seeds_produce_both_figures(tmp_path):
    rng = np.random.default_rng(0)
    for seed in range(5):
        _write_run(tmp_path / "runs" / "baseline" / f"seed_{seed}" / "metrics.csv", "baseline", rng.normal(size=8))
    written = plot_curves([tmp_path / "runs"], tmp_path / "plots")
    assert sorted(p.name for p in written) == ["curves_adv.png", "curves_good.png"]
    assert all(p.stat().st_size > 0 for p in written)


def test_single_seed(tmp_path):
    path = _write_run(tmp_path / "metrics.csv", "second_order_good", [0.0, 1.0, 2.0])
    assert len(plot_curves([path], tmp_path / "plots")) == 2


def test_seed_average_aligns_on_common_steps():
    x1, y1 = np.array([100.0, 200.0, 300.0]), np.array([1.0, 2.0, 3.0])
    x2, y2 = np.array([100.0, 200.0]), np.array([3.0, np.nan])
    x, mean, std = seed_average([(x1, y1), (x2, y2)])
    assert x.tolist() == [100.0, 200.0]
    assert mean.tolist() == [2.0, 2.0]
    assert std.tolist() == [1.0, 0.0]


def test_empty_directory_writes_nothing(tmp_path):
    (tmp_path / "empty").mkdir()
    with pytest.raises(FileNotFoundError):
        plot_curves([tmp_path / "empty"], tmp_path / "plots")
    assert not (tmp_path / "plots").exists()


def test_malformed_csv_reports_line_and_writes_nothing(tmp_path):
    good = _write_run(tmp_path / "a" / "metrics.csv", "baseline", [1.0, 2.0])
    bad = _write_run(tmp_path / "b" / "metrics.csv", "baseline", [1.0, 2.0])
    text = bad.read_text().splitlines()
    text[4] = text[4].replace("200", "two hundred", 1)
    bad.write_text("\n".join(text) + "\n")
    with pytest.raises(MetricsFormatError) as info:
        plot_curves([good, bad], tmp_path / "plots")
    assert info.value.line == 5
    assert not (tmp_path / "plots").exists()
    assert find_metrics_files([tmp_path]) == [good, bad]
