"""Asymptotic final sizes against reference values for the standard parameter sets."""
import pytest

from hhsev.fitting.diagnostics import identifiability_functions, observed_attack_fractions
from hhsev.fitting.kl import TargetData
from hhsev.models.ids import attack_fraction, integrate_ids
from hhsev.models.mt import generate_mt_distribution, solve_balance

pytestmark = pytest.mark.integration

# n: (p_M, p_S, p_INF, p_S / p_INF)
MT_RHO5 = {
    1: (0.1273, 0.3256, 0.4529, 0.7189),
    2: (0.1585, 0.3753, 0.5337, 0.7031),
    3: (0.1925, 0.4229, 0.6154, 0.6872),
    4: (0.2271, 0.4658, 0.6929, 0.6722),
    5: (0.2603, 0.5021, 0.7624, 0.6586),
}
IDS_RHO5 = {
    1: (0.1822, 0.2865, 0.4687, 0.6113),
    2: (0.1976, 0.3542, 0.5517, 0.6419),
    3: (0.2104, 0.4261, 0.6364, 0.6695),
    4: (0.2196, 0.4975, 0.7171, 0.6937),
    5: (0.2250, 0.5638, 0.7888, 0.7147),
}
COLUMNS = ["p_M", "p_S", "p_INF", "p_S_over_p_INF"]


def _check(aggregates, expected, tol):
    for _, row in aggregates.iterrows():
        n = int(row["n"])
        assert [row[c] for c in COLUMNS] == pytest.approx(expected[n], abs=tol), f"size {n}"


def test_mt_rho5_aggregates(mt_params, mt_global, rho5):
    distribution, balance = generate_mt_distribution(mt_params, mt_global, rho5)
    assert not balance.subcritical
    _check(distribution.aggregates(), MT_RHO5, tol=2e-4)


def test_mt_escape_probabilities_rho3(mt_params, mt_global, rho3):
    balance = solve_balance(mt_params, mt_global, rho3)
    assert balance.pi == pytest.approx((0.7263, 0.5224), abs=1e-4)
    assert balance.residual < 1e-10


def test_ids_rho5_aggregates(ids_params, rho5):
    solution = integrate_ids(ids_params, rho5)
    assert solution.diagnostics["final_infective_mass"] < 1.0001e-7
    _check(solution.distribution.aggregates(), IDS_RHO5, tol=1e-3)


def test_ids_identifiable_combinations(ids_params, rho3):
    q = integrate_ids(ids_params, rho3).distribution
    z = observed_attack_fractions(TargetData(q, rho3))
    assert sum(z) == pytest.approx(attack_fraction(q, rho3), rel=1e-12)

    f1, f2, f3 = identifiability_functions(ids_params, z)
    assert f1 == pytest.approx(0.50669, abs=1e-3)
    assert f2 == pytest.approx(0.5)
    assert f3 == pytest.approx(0.21340, abs=1e-3)
