import numpy as np
import pytest
import torch

from core.services.evaluation_service import evaluate_policy
from core.services.particle_world import ParticleWorld
from core.services.trainer_service import build_slot
from core.storage.csv_store import TrajectoryWriter


@pytest.fixture
def policies(tiny_config):
    torch.manual_seed(0)
    return build_slot(tiny_config, "good").policy, build_slot(tiny_config, "adversary").policy


def test_evaluation_never_reads_ground_truth(tiny_config, policies, monkeypatch):
    def forbidden(self, state):
        raise AssertionError("ground truth accessed during evaluation")

    monkeypatch.setattr(ParticleWorld, "ground_truth_beliefs", forbidden)
    result = evaluate_policy(*policies, tiny_config.env, 3, seed=1)
    assert len(result.good_returns) == 3


def test_evaluation_is_repeatable(tiny_config, policies):
    a = evaluate_policy(*policies, tiny_config.env, 4, seed=11)
    b = evaluate_policy(*policies, tiny_config.env, 4, seed=11)
    assert a.good_returns == b.good_returns and a.adv_returns == b.adv_returns
    assert np.isfinite(a.mean_good) and np.isfinite(a.var_adv)


def test_deterministic_evaluation(tiny_config, policies):
    a = evaluate_policy(*policies, tiny_config.env, 2, seed=1, deterministic=True)
    b = evaluate_policy(*policies, tiny_config.env, 2, seed=99, deterministic=True)
    assert len(a.good_returns) == len(b.good_returns) == 2


def test_trajectory_dump(tiny_config, policies, tmp_path):
    result = evaluate_policy(*policies, tiny_config.env, 2, seed=1, dump_dir=tmp_path)
    assert [p.name for p in result.trajectory_files] == ["episode_000.csv", "episode_001.csv"]
    lines = result.trajectory_files[0].read_text().splitlines()
    assert lines[0].startswith("t,x0,y0")
    assert 2 <= len(lines) <= tiny_config.env.max_steps + 1


def test_trajectory_file_is_closed_when_a_step_fails(tiny_config, policies, tmp_path, monkeypatch):
    closed = []
    original_close = TrajectoryWriter.close

    def tracking_close(self):
        closed.append(self.path)
        original_close(self)

    def failing_step(self, state, actions):
        raise RuntimeError("physics blew up")

    monkeypatch.setattr(TrajectoryWriter, "close", tracking_close)
    monkeypatch.setattr(ParticleWorld, "step", failing_step)
    with pytest.raises(RuntimeError, match="physics blew up"):
        evaluate_policy(*policies, tiny_config.env, 2, seed=1, dump_dir=tmp_path)
    assert closed == [tmp_path / "episode_000.csv"]
    assert closed[0].read_text().startswith("t,x0,y0")
