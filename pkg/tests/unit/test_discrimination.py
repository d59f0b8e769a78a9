import unittest

import numpy as np
import pytest

from hhsev.core.errors import ConfigError
from hhsev.core.params import IdsParams, ModelKind, MtGlobalRates, MtParams
from hhsev.core.population import HouseholdSizeDistribution
from hhsev.experiments.discrimination import (
    DegeneracyReport,
    ExperimentSpec,
    GeneratingModel,
    degeneracy_report,
    draw_parameters,
    finite_data_experiment,
    generate_asymptotic,
    random_parameter_sweep,
)

RHO3 = HouseholdSizeDistribution(props=(1 / 3, 1 / 3, 1 - 2 / 3))


class TestDrawParameters(unittest.TestCase):

    def test_override_removes_mild_type(self):
        generator = draw_parameters(ModelKind.MT, np.random.default_rng(0), overrides={"beta_M": 0.0})
        self.assertEqual(generator.mt_params.beta_M, 0.0)
        report = degeneracy_report(generator, attack=0.4)
        self.assertEqual(report.mt_one_type, 0.0)
        self.assertTrue(report.flags()["mt_one_type"])
        self.assertTrue(report.flagged)

    def test_tied_local_probabilities(self):
        generator = draw_parameters(ModelKind.IDS, np.random.default_rng(1), tie_local_probabilities=True)
        p = generator.ids_params
        self.assertEqual(p.p_L_SM, p.p_L_MM)
        report = degeneracy_report(generator, attack=0.5)
        self.assertEqual(report.ids_local_severity, 0.0)
        self.assertTrue(report.flags()["ids_local_severity"])
        self.assertIsNone(report.mt_one_type)

    def test_unknown_override(self):
        with self.assertRaises(ConfigError):
            draw_parameters(ModelKind.IDS, np.random.default_rng(2), overrides={"beta_M": 0.5})

    def test_same_rng_state_same_draw(self):
        a = draw_parameters(ModelKind.IDS, np.random.default_rng(9))
        b = draw_parameters(ModelKind.IDS, np.random.default_rng(9))
        self.assertEqual(a.params_dict(), b.params_dict())


class TestDegeneracyReport(unittest.TestCase):

    def test_near_critical_flag(self):
        report = DegeneracyReport(near_critical=0.01)
        self.assertEqual(report.flags(), {"near_critical": True})
        row = report.to_row()
        self.assertIn("prox_ids_local_contact", row)
        self.assertNotIn("flag_ids_local_contact", row)

    def test_reference_ids_not_flagged(self):
        generator = GeneratingModel(ModelKind.IDS, ids_params=IdsParams(
            lambda_G_M=1.0, lambda_G_S=2.0, lambda_L_M=0.5, lambda_L_S=1.0,
            p_G_MM=0.8, p_G_SM=0.2, p_L_MM=0.5, p_L_SM=0.1, gamma_S=2.0,
        ))
        self.assertFalse(degeneracy_report(generator, attack=0.5).flagged)


class TestSpecs(unittest.TestCase):

    def test_generating_model_needs_parameters(self):
        with self.assertRaises(ConfigError):
            GeneratingModel(ModelKind.MT, mt_params=MtParams(lambda_L=((0, 0), (0, 0)), beta_M=0.5))
        with self.assertRaises(ConfigError):
            GeneratingModel(ModelKind.IDS)

    def test_experiment_spec_validation(self):
        dists = {"rho3": RHO3}
        with self.assertRaises(ConfigError):
            ExperimentSpec(kind="unknown", dists=dists)
        with self.assertRaises(ConfigError):
            ExperimentSpec(kind="cross_fit", dists={})
        with self.assertRaises(ConfigError):
            ExperimentSpec(kind="sweep", dists=dists)
        with self.assertRaises(ConfigError):
            ExperimentSpec(kind="finite_data", dists=dists)
        with self.assertRaises(ConfigError):
            ExperimentSpec(kind="cross_fit", dists=dists, data_mode="simulated", m=100)
        spec = ExperimentSpec(kind="finite_data", dists=dists, m=500)
        self.assertEqual(spec.data_mode, "simulated")

    def test_zero_dataset_requests_rejected(self):
        with self.assertRaises(ConfigError):
            random_parameter_sweep(ModelKind.MT, 0, RHO3)
        generator = GeneratingModel(
            ModelKind.MT,
            mt_params=MtParams(lambda_L=((0.2, 0.4), (0.4, 0.8)), beta_M=0.4),
            mt_global=MtGlobalRates(rates=((0.25, 0.8), (0.8, 1.5))),
        )
        with self.assertRaises(ConfigError):
            finite_data_experiment(generator, RHO3, n_datasets=0)


def test_subcritical_generation_is_flagged():
    generator = GeneratingModel(
        ModelKind.MT,
        mt_params=MtParams(lambda_L=((0.0, 0.0), (0.0, 0.0)), beta_M=0.5),
        mt_global=MtGlobalRates(rates=((0.1, 0.1), (0.1, 0.1))),
    )
    data = generate_asymptotic(generator, RHO3)
    assert data.subcritical
    assert data.attack_fraction == 0.0
    assert data.pi == (1.0, 1.0)


@pytest.mark.parametrize("kind,extra,expected", [
    ("sweep", {"sweep_model": ModelKind.MT}, 100),
    ("finite_data", {"m": 500}, 25),
    ("cross_fit", {}, 1),
])
def test_dataset_count_defaults_by_kind(kind, extra, expected):
    spec = ExperimentSpec(kind=kind, dists={"rho3": RHO3}, **extra)
    assert spec.n_datasets == expected
    assert ExperimentSpec(kind=kind, dists={"rho3": RHO3}, n_datasets=7, **extra).n_datasets == 7
