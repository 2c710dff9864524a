"""Chart rendering: every figure lands on disk, from live or recorded inputs."""

import numpy as np
import pytest

from flockplan import plots
from flockplan.dataset import GeneratorConfig, comfort_plans, generate_flock
from flockplan.errors import ParseError


@pytest.fixture(scope="module")
def samples():
    cfg = GeneratorConfig(seed=41, n_flocks=3)
    return [generate_flock(cfg, flock_id=i) for i in range(3)]


def _histories():
    return {
        "6": [{"generation": g, "best": 2.0 - 0.01 * g, "mean": 2.1,
               "evaluations": 50 * g} for g in range(20)],
        "3": [{"generation": g, "best": 0.1 - 0.001 * g, "mean": 0.2,
               "evaluations": 50 * g} for g in range(15)],
    }


class TestFigures:

    def test_corpus_bands(self, samples, tmp_path):
        out = plots.save_corpus_bands(samples, tmp_path / "bands.png")
        assert out.exists() and out.stat().st_size > 1000

    def test_convergence_from_dict_rows(self, tmp_path):
        out = plots.save_convergence(_histories(), tmp_path / "conv.png")
        assert out.exists() and out.stat().st_size > 1000

    def test_convergence_empty_histories_rejected(self, tmp_path):
        with pytest.raises(ParseError):
            plots.save_convergence({}, tmp_path / "conv.png")

    def test_boundary_errors_sorts_weeks(self, tmp_path):
        rows = [
            {"week": w, "absolute": [1.0, 1.0, 1.0],
             "relative": [0.01 * w, 0.002, 0.003]}
            for w in (3, 1, 5, 2, 4)
        ]
        out = plots.save_boundary_errors(rows, tmp_path / "stitch.png")
        assert out.exists() and out.stat().st_size > 1000

    def test_action_plan_accepts_dataclasses(self, tmp_path):
        days = comfort_plans(GeneratorConfig())
        out = plots.save_action_plan(days, tmp_path / "plan.png")
        assert out.exists() and out.stat().st_size > 1000

    def test_action_plan_accepts_dicts(self, tmp_path):
        days = [
            {"day": d, "t_min": 20.0, "t_avg": 22.0, "t_max": 24.0,
             "h_min": 50.0, "h_avg": 60.0, "h_max": 70.0}
            for d in range(1, 41)
        ]
        out = plots.save_action_plan(days, tmp_path / "plan.png")
        assert out.exists()

    def test_trajectory_with_overlay(self, samples, tmp_path):
        predicted = samples[0].outcome_matrix()
        observed = samples[1].outcome_matrix()
        out = plots.save_trajectory(predicted, tmp_path / "traj.png",
                                    observed=observed)
        assert out.exists() and out.stat().st_size > 1000

    def test_trajectory_shape_checked(self, tmp_path):
        with pytest.raises(ParseError):
            plots.save_trajectory(np.zeros((40, 2)), tmp_path / "traj.png")

    def test_parent_directories_created(self, tmp_path):
        out = plots.save_trajectory(np.ones((5, 3)),
                                    tmp_path / "a" / "b" / "traj.png")
        assert out.exists()
