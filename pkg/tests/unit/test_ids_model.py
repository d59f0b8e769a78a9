import unittest
from math import comb

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from hhsev.core.errors import ConfigError
from hhsev.core.params import IdsParams
from hhsev.core.population import HouseholdSizeDistribution
from hhsev.models.ids import IdsSystem, attack_fraction, ids_final_size, ids_rhs, integrate_ids

ZERO_RATES = IdsParams(
    lambda_G_M=0.0, lambda_G_S=0.0, lambda_L_M=0.0, lambda_L_S=0.0,
    p_G_MM=0.5, p_G_SM=0.5, p_L_MM=0.5, p_L_SM=0.5, gamma_S=1.0,
)


class TestIdsRhs(unittest.TestCase):

    def setUp(self):
        self.params = IdsParams(
            lambda_G_M=1.0, lambda_G_S=2.0, lambda_L_M=0.5, lambda_L_S=1.0,
            p_G_MM=0.8, p_G_SM=0.2, p_L_MM=0.5, p_L_SM=0.1, gamma_S=2.0,
        )
        self.dist = HouseholdSizeDistribution(props=(0.2, 0.3, 0.5))
        self.system = IdsSystem(self.params, self.dist)

    def test_no_infectives_is_stationary(self):
        rng = np.random.default_rng(1)
        idx = self.system.index
        x = np.where((idx.i == 0) & (idx.j == 0), rng.uniform(size=len(idx)), 0.0)
        np.testing.assert_array_equal(ids_rhs(x, self.params, self.dist), np.zeros(len(idx)))

    def test_per_size_mass_is_conserved(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(size=len(self.system.index))
        for n, sl in self.system.index.offsets.items():
            x[sl] /= x[sl].sum()
        dx = self.system.rhs(0.0, x)
        for n, sl in self.system.index.offsets.items():
            self.assertAlmostEqual(float(dx[sl].sum()), 0.0, places=12)

    def test_single_mild_removal(self):
        dist = HouseholdSizeDistribution(props=(1.0,))
        system = IdsSystem(self.params, dist)
        idx = system.index
        x = np.zeros(len(idx))
        x[idx.find(1, 1, 0, 0, 0)] = 0.3
        x[idx.find(1, 0, 0, 0, 0)] = 0.7
        dx = system.rhs(0.0, x)
        self.assertAlmostEqual(dx[idx.find(1, 0, 0, 1, 0)], 0.3, places=14)


class TestIdsFinalSize(unittest.TestCase):

    def test_zero_rates_leave_initial_infectives_only(self):
        dist = HouseholdSizeDistribution(props=(0.2, 0.3, 0.5))
        f_S = 1e-5
        solution = integrate_ids(ZERO_RATES, dist, f_S=f_S, delta=1e-7)
        q = solution.distribution
        for n in dist.sizes:
            expected = [comb(n, j) * f_S ** j * (1 - f_S) ** (n - j) for j in range(n + 1)]
            np.testing.assert_allclose(q[n][0, :], expected, atol=1e-6)
            self.assertEqual(q[n][1:, :].sum(), 0.0)
        self.assertLess(solution.diagnostics["final_infective_mass"], 1.0001e-7)
        self.assertLess(solution.diagnostics["normalization_drift"], 1e-8)
        self.assertLess(attack_fraction(q, dist), 1e-4)

    def test_rejects_bad_seeding(self):
        dist = HouseholdSizeDistribution(props=(1.0,))
        with self.assertRaises(ConfigError):
            ids_final_size(ZERO_RATES, dist, f_S=1e-7, delta=1e-5)


def test_final_sizes_insensitive_to_seeding_and_stop_level(ids_params, rho3):
    base = ids_final_size(ids_params, rho3, f_S=1e-5, delta=1e-7)
    halved = ids_final_size(ids_params, rho3, f_S=5e-6, delta=5e-8)
    for n in rho3.sizes:
        assert np.abs(base[n] - halved[n]).max() < 1e-4, f"size {n}"


def test_removed_mass_never_decreases(ids_params, rho3):
    system = IdsSystem(ids_params, rho3)
    idx = system.index
    rho = np.array([rho3.rho(int(n)) for n in idx.n])
    removed_weight = (idx.k + idx.l) * rho
    sol = solve_ivp(
        system.rhs, (0.0, 40.0), system.initial_state(1e-5),
        method="RK45", rtol=1e-9, atol=1e-12, t_eval=np.linspace(0.0, 40.0, 401),
    )
    assert sol.success
    removed = removed_weight @ sol.y
    assert np.all(np.diff(removed) >= -1e-12)
    assert removed[-1] > removed[0] + 0.1
    for c in range(sol.y.shape[1]):
        for total in system.size_totals(sol.y[:, c]).values():
            assert total == pytest.approx(1.0, abs=1e-8)
