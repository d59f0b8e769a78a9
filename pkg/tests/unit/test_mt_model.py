import logging
import unittest
from functools import lru_cache
from math import comb

import numpy as np
import pytest

from hhsev.config.settings import defaults
from hhsev.core.errors import ConfigError
from hhsev.core.params import MtGlobalRates, MtParams
from hhsev.core.population import HouseholdSizeDistribution
from hhsev.models.mt import (
    household_final_size,
    household_final_size_means,
    mt_final_size_distribution,
    solve_balance,
)

REFERENCE_LOCAL = ((0.2, 0.4), (0.4, 0.8))


def jump_chain_final_size(n, k, lambda_L, pi, gammas=(1.0, 1.0)):
    """Brute-force final-size law of the two-type household chain."""
    (l_MM, l_MS), (l_SM, l_SS) = lambda_L
    n_sev = n - k

    @lru_cache(maxsize=None)
    def absorb(s_M, s_S, i_M, i_S):
        if i_M + i_S == 0:
            return {(k - s_M, n_sev - s_S): 1.0}
        rates = [
            (gammas[0] * i_M, (s_M, s_S, i_M - 1, i_S)),
            (gammas[1] * i_S, (s_M, s_S, i_M, i_S - 1)),
            (s_M * (i_M * l_MM + i_S * l_SM), (s_M - 1, s_S, i_M + 1, i_S)),
            (s_S * (i_M * l_MS + i_S * l_SS), (s_M, s_S - 1, i_M, i_S + 1)),
        ]
        total = sum(r for r, _ in rates)
        out = {}
        for r, nxt in rates:
            if r == 0:
                continue
            for key, p in absorb(*nxt).items():
                out[key] = out.get(key, 0.0) + r / total * p
        return out

    table = np.zeros((k + 1, n_sev + 1))
    for a in range(k + 1):
        for b in range(n_sev + 1):
            w = (comb(k, a) * (1 - pi[0]) ** a * pi[0] ** (k - a)
                 * comb(n_sev, b) * (1 - pi[1]) ** b * pi[1] ** (n_sev - b))
            for (i, j), p in absorb(k - a, n_sev - b, a, b).items():
                table[i, j] += w * p
    return table


class TestHouseholdFinalSize(unittest.TestCase):

    def test_single_mild_individual(self):
        P = household_final_size(1, 1, REFERENCE_LOCAL, (0.7, 0.9))
        self.assertEqual(P.shape, (2, 1))
        self.assertAlmostEqual(P[0, 0], 0.7, places=14)
        self.assertAlmostEqual(P[1, 0], 0.3, places=14)

    def test_no_local_spread_is_independent(self):
        P = household_final_size(2, 2, ((0.0, 0.0), (0.0, 0.0)), (0.7, 0.9))
        expected = [comb(2, i) * 0.3 ** i * 0.7 ** (2 - i) for i in range(3)]
        np.testing.assert_allclose(P[:, 0], expected, atol=1e-14)

    def test_means(self):
        self.assertEqual(household_final_size_means(1, 1, REFERENCE_LOCAL, (0.7, 0.9)), pytest.approx((0.3, 0.0)))
        zero = ((0.0, 0.0), (0.0, 0.0))
        self.assertEqual(household_final_size_means(2, 0, zero, (0.9, 0.5)), pytest.approx((0.0, 1.0)))

    def test_reference_table_matches_jump_chain(self):
        pi = (0.7263, 0.5224)
        P = household_final_size(3, 1, REFERENCE_LOCAL, pi)
        np.testing.assert_allclose(P, jump_chain_final_size(3, 1, REFERENCE_LOCAL, pi), atol=1e-10)
        means = household_final_size_means(3, 1, REFERENCE_LOCAL, pi)
        oracle = jump_chain_final_size(3, 1, REFERENCE_LOCAL, pi)
        self.assertAlmostEqual(means[0], float(np.arange(2) @ oracle.sum(axis=1)), places=10)
        self.assertAlmostEqual(means[1], float(np.arange(3) @ oracle.sum(axis=0)), places=10)

    def test_rejects_bad_inputs(self):
        with self.assertRaises(ConfigError):
            household_final_size(2, 3, REFERENCE_LOCAL, (0.5, 0.5))
        with self.assertRaises(ConfigError):
            household_final_size(2, 1, REFERENCE_LOCAL, (0.0, 0.5))


def test_random_draws_match_jump_chain():
    rng = np.random.default_rng(12345)
    for _ in range(20):
        lam = rng.exponential(1.0, size=4)
        lambda_L = ((lam[0], lam[1]), (lam[2], lam[3]))
        pi = tuple(rng.uniform(0.05, 1.0, size=2))
        for n in range(1, 4):
            for k in range(n + 1):
                P = household_final_size(n, k, lambda_L, pi)
                np.testing.assert_allclose(P, jump_chain_final_size(n, k, lambda_L, pi), atol=1e-10)
                assert abs(P.sum() - 1.0) < 1e-9
                assert P.min() >= 0.0


class TestMixture(unittest.TestCase):

    def test_all_mild_single_households(self):
        params = MtParams(pi_M=0.6, pi_S=0.9, lambda_L=REFERENCE_LOCAL, beta_M=1.0)
        q = mt_final_size_distribution(params, HouseholdSizeDistribution(props=(1.0,)))
        self.assertAlmostEqual(q[1][0, 0], 0.6)
        self.assertAlmostEqual(q[1][1, 0], 0.4)
        self.assertEqual(q[1][0, 1], 0.0)

    def test_no_mild_types(self):
        params = MtParams(pi_M=0.6, pi_S=0.7, lambda_L=REFERENCE_LOCAL, beta_M=0.0)
        q = mt_final_size_distribution(params, HouseholdSizeDistribution(props=(0.2, 0.3, 0.5)))
        for n in q.sizes:
            self.assertEqual(q[n][1:, :].sum(), 0.0)
            self.assertAlmostEqual(q.total(n), 1.0, places=9)


class TestBalance(unittest.TestCase):

    def test_zero_global_rates_give_trivial_solution(self):
        params = MtParams(lambda_L=REFERENCE_LOCAL, beta_M=0.4)
        solution = solve_balance(params, MtGlobalRates(rates=((0.0, 0.0), (0.0, 0.0))),
                                 HouseholdSizeDistribution(props=(0.3, 0.3, 0.4)))
        self.assertTrue(solution.subcritical)
        self.assertEqual((solution.z_M, solution.z_S), (0.0, 0.0))
        self.assertEqual(solution.pi, (1.0, 1.0))


def test_balance_residual_above_tolerance_is_logged(monkeypatch, caplog, mt_params, mt_global, rho3):
    monkeypatch.setattr(defaults.balance, "residual_tolerance", -1.0)
    with caplog.at_level(logging.WARNING, logger="hhsev.models.mt"):
        solution = solve_balance(mt_params, mt_global, rho3)
    assert not solution.subcritical
    assert any("Balance residual" in r.getMessage() for r in caplog.records)


def test_balance_residual_within_tolerance_is_quiet(caplog, mt_params, mt_global, rho3):
    with caplog.at_level(logging.WARNING, logger="hhsev.models.mt"):
        solution = solve_balance(mt_params, mt_global, rho3)
    assert solution.residual <= defaults.balance.residual_tolerance
    assert not [r for r in caplog.records if "Balance residual" in r.getMessage()]


@pytest.mark.parametrize("gamma_M", [0.5, 2.0, 3.7])
def test_mild_removal_rate_absorbed_into_mild_contact_rates(gamma_M):
    """Scaling the mild infector row by gamma_M and removing mild cases at rate gamma_M changes nothing."""
    pi = (0.7263, 0.5224)
    (l_MM, l_MS), row_S = REFERENCE_LOCAL
    scaled = ((gamma_M * l_MM, gamma_M * l_MS), row_S)
    for n, k in [(2, 1), (3, 1), (3, 2), (4, 2)]:
        np.testing.assert_allclose(
            jump_chain_final_size(n, k, scaled, pi, gammas=(gamma_M, 1.0)),
            household_final_size(n, k, REFERENCE_LOCAL, pi),
            atol=1e-10,
        )


def test_general_removal_rates_match_rescaled_unit_solver():
    rng = np.random.default_rng(77)
    for _ in range(10):
        lam = rng.exponential(1.0, size=4)
        gammas = tuple(rng.uniform(0.3, 3.0, size=2))
        pi = tuple(rng.uniform(0.1, 1.0, size=2))
        lambda_L = ((lam[0], lam[1]), (lam[2], lam[3]))
        per_period = (
            (lam[0] / gammas[0], lam[1] / gammas[0]),
            (lam[2] / gammas[1], lam[3] / gammas[1]),
        )
        for n, k in [(3, 0), (3, 1), (3, 3)]:
            np.testing.assert_allclose(
                jump_chain_final_size(n, k, lambda_L, pi, gammas=gammas),
                household_final_size(n, k, per_period, pi),
                atol=1e-10,
            )
