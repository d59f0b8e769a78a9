"""Large-population behaviour of the simulator: convergence, normal totals, rate rescaling."""
from dataclasses import replace

import numpy as np
import pytest

from hhsev.core.params import ModelKind, MtGlobalRates, MtParams
from hhsev.core.population import PopulationConfig
from hhsev.models.mt import generate_mt_distribution
from hhsev.simulation.simulator import SimConfig, run_batch
from hhsev.simulation.summary import normal_moments, normality_screen

pytestmark = pytest.mark.integration


def mt_config(mt_params, mt_global, dist, m, seed, **kwargs):
    return SimConfig(
        model=ModelKind.MT,
        population=PopulationConfig(dist=dist, m=m),
        mt_params=mt_params,
        mt_global=mt_global,
        seed=seed,
        **kwargs,
    )


def test_total_variation_shrinks_with_population_size(mt_params, mt_global, rho3):
    asymptotic, _ = generate_mt_distribution(mt_params, mt_global, rho3)
    distances = {}
    for m in (300, 3000):
        batch = run_batch(mt_config(mt_params, mt_global, rho3, m, seed=m), replicates=20)
        assert batch.n_major >= 15
        distances[m] = batch.empirical.total_variation(asymptotic)
    assert distances[3000] < distances[300]
    assert distances[3000] < 0.02


@pytest.fixture(scope="module")
def large_batches(mt_params, mt_global, ids_params, rho5):
    population = PopulationConfig(dist=rho5, m=2000)
    configs = {
        ModelKind.MT: SimConfig(model=ModelKind.MT, population=population,
                                mt_params=mt_params, mt_global=mt_global, seed=11),
        ModelKind.IDS: SimConfig(model=ModelKind.IDS, population=population,
                                 ids_params=ids_params, seed=12),
    }
    out = {}
    for model, config in configs.items():
        batch = run_batch(config, replicates=520)
        majors = [o for o in batch.outcomes if o.major]
        assert len(majors) >= 500
        out[model] = majors[:500]
    return out


@pytest.mark.parametrize("model", [ModelKind.MT, ModelKind.IDS])
@pytest.mark.parametrize("total", ["mild_total", "severe_total"])
def test_major_outbreak_totals_look_normal(large_batches, model, total):
    values = [getattr(o, total) for o in large_batches[model]]
    # Skewness standard error at 500 draws is about 0.11.
    screen = normality_screen(values, max_skew=0.4, max_excess_kurtosis=0.8)
    assert screen["passed"], screen


def test_ids_mild_totals_spread_wider_than_mt(large_batches):
    mt = normal_moments(large_batches[ModelKind.MT])
    ids = normal_moments(large_batches[ModelKind.IDS])
    assert ids["std_mild"] > mt["std_mild"]


def test_mild_removal_rate_rescaling_leaves_totals_unchanged(mt_params, mt_global, rho3):
    c = 2.0
    (l_MM, l_MS), row_S = mt_params.lambda_L
    (g_MM, g_MS), g_row_S = mt_global.rates
    scaled_params = MtParams(lambda_L=((c * l_MM, c * l_MS), row_S), beta_M=mt_params.beta_M)
    scaled_global = MtGlobalRates(rates=((c * g_MM, c * g_MS), g_row_S))

    base = mt_config(mt_params, mt_global, rho3, 500, seed=101)
    rescaled = replace(base, mt_params=scaled_params, mt_global=scaled_global, mt_gammas=(c, 1.0), seed=202)
    a = [o for o in run_batch(base, 300).outcomes if o.major]
    b = [o for o in run_batch(rescaled, 300).outcomes if o.major]
    assert len(a) > 250 and len(b) > 250
    for total in ("mild_total", "severe_total"):
        x = np.array([getattr(o, total) for o in a], dtype=float)
        y = np.array([getattr(o, total) for o in b], dtype=float)
        se = np.sqrt(x.var(ddof=1) / len(x) + y.var(ddof=1) / len(y))
        assert abs(x.mean() - y.mean()) < 4.5 * se, total
