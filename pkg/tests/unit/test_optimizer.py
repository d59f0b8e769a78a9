import unittest

import numpy as np
import pytest

from hhsev.core.errors import ConfigError
from hhsev.core.params import ModelKind, MtParams
from hhsev.core.population import HouseholdSizeDistribution
from hhsev.fitting.kl import TargetData
from hhsev.fitting.optimizer import FitConfig, KlObjective, draw_start, fit_model, multi_run, trimmed_summary
from hhsev.models.mt import mt_final_size_distribution

RHO3 = HouseholdSizeDistribution(props=(1 / 3, 1 / 3, 1 - 2 / 3))
MT_TRUE = MtParams(pi_M=0.7263, pi_S=0.5224, lambda_L=((0.2, 0.4), (0.4, 0.8)), beta_M=0.4)


class TestFitModel(unittest.TestCase):

    def setUp(self):
        self.target = TargetData(mt_final_size_distribution(MT_TRUE, RHO3), RHO3)

    def test_start_at_truth_stays_there(self):
        config = FitConfig(seed=1, max_evals=150, keep_trace=True)
        result = fit_model(ModelKind.MT, self.target, config, start=MT_TRUE.to_vector())
        self.assertLessEqual(result.f_theta_hat, 1e-10)
        np.testing.assert_allclose(result.theta_hat.to_vector(), MT_TRUE.to_vector(), atol=1e-3)
        trace = np.array(result.trace)
        self.assertEqual(len(trace), result.evaluations)
        self.assertTrue(np.all(np.diff(trace) <= 0))

    def test_random_start_improves(self):
        config = FitConfig(seed=3, max_evals=200)
        result = fit_model(ModelKind.MT, self.target, config)
        objective = KlObjective(ModelKind.MT, self.target, config)
        self.assertLessEqual(result.f_theta_hat, objective(result.start))
        self.assertEqual(result.derived, {})

    def test_same_seed_same_result(self):
        config = FitConfig(seed=8, max_evals=60)
        a = fit_model(ModelKind.MT, self.target, config, run_index=2)
        b = fit_model(ModelKind.MT, self.target, config, run_index=2)
        self.assertEqual(a.f_theta_hat, b.f_theta_hat)
        np.testing.assert_array_equal(a.start, b.start)


def test_draw_start_respects_bounds():
    config = FitConfig()
    rng = np.random.default_rng(0)
    for model in ModelKind:
        b = config.bounds(model)
        for _ in range(50):
            x = draw_start(model, rng, config)
            assert np.all(x >= b.lb) and np.all(x <= b.ub)


def test_objective_clips_into_box():
    target = TargetData(mt_final_size_distribution(MT_TRUE, RHO3), RHO3)
    config = FitConfig()
    objective = KlObjective(ModelKind.MT, target, config)
    inside = np.array([config.probability_bounds[1], 0.5, 0.2, 0.4, 0.4, 0.8, 0.4])
    outside = inside.copy()
    outside[0] = 1.5
    assert objective(outside) == objective(inside)
    assert objective.evaluations == 2


def test_multi_run_single_run_is_best():
    target = TargetData(mt_final_size_distribution(MT_TRUE, RHO3), RHO3)
    result = multi_run(ModelKind.MT, target, 1, FitConfig(seed=4, max_evals=40))
    assert len(result.results) == 1
    assert result.best is result.results[0]
    with pytest.raises(ConfigError):
        multi_run(ModelKind.MT, target, 0)


def test_trimmed_summary_keeps_best_fraction():
    target = TargetData(mt_final_size_distribution(MT_TRUE, RHO3), RHO3)
    result = multi_run(ModelKind.MT, target, 4, FitConfig(seed=6, max_evals=30))
    summary = trimmed_summary(result.results, fraction=0.5)
    best_two = sorted(r.f_theta_hat for r in result.results)[:2]
    assert summary.loc["f_theta_hat", "mean"] == pytest.approx(np.mean(best_two))
    assert list(summary.columns) == ["mean", "std"]
    assert "beta_M" in summary.index
