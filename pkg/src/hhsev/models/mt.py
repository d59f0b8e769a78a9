"""
Asymptotic final-size distribution of the multitype household (MT) model.

Individuals are mild-type with probability beta_M and keep their type for
life. Within a household, infection spreads at the local rates lambda_L; the
rest of the population acts only through the escape probabilities
(pi_M, pi_S). In generation mode those come from the balance equations
linking them to the overall attack fractions (z_M, z_S).
"""
import json
import logging
from dataclasses import asdict, dataclass
from math import comb, exp
from typing import Dict, Tuple

import numpy as np
from scipy.stats import binom

from hhsev.config.settings import defaults
from hhsev.core.distributions import FinalSizeDistribution, empty_table
from hhsev.core.errors import ConfigError, ConvergenceError, IllConditionedError
from hhsev.core.params import Matrix2, MtGlobalRates, MtParams
from hhsev.core.population import HouseholdSizeDistribution, mean_household_size

logger = logging.getLogger(__name__)


# ============================================================================
# Single household
# ============================================================================

def household_final_size(
    n: int,
    k: int,
    lambda_L: Matrix2,
    pi: Tuple[float, float],
) -> np.ndarray:
    """
    Joint law P(Z_M = i, Z_S = j) for a household of n members, k of them mild-type.

    Solves the triangular system by forward substitution in lexicographic
    (i1, j1) order. Each equation is multiplied through by its diagonal
    coefficient so no division by pi is needed:

        P(i1, j1) = C(k, i1) C(n-k, j1) pi_M^(k-i1) pi_S^(n-k-j1) h_M^i1 h_S^j1
                    - sum_{(i, j) != (i1, j1)} C(k-i, i1-i) C(n-k-j, j1-j) P(i, j) h_M^(i1-i) h_S^(j1-j)

    with h_M, h_S evaluated at (i1, j1). Returns an array of shape (k+1, n-k+1).
    """
    if not 0 <= k <= n:
        raise ConfigError(f"need 0 <= k <= n, got n={n}, k={k}")
    pi_M, pi_S = float(pi[0]), float(pi[1])
    if not (0.0 < pi_M <= 1.0 and 0.0 < pi_S <= 1.0):
        raise ConfigError(f"escape probabilities must lie in (0, 1], got ({pi_M}, {pi_S})")
    (l_MM, l_MS), (l_SM, l_SS) = lambda_L

    n_sev = n - k
    slack = defaults.addy.ill_conditioning_slack
    P = np.zeros((k + 1, n_sev + 1))

    for i1 in range(k + 1):
        for j1 in range(n_sev + 1):
            mild_left, sev_left = k - i1, n_sev - j1
            h_M = 1.0 / (1.0 + mild_left * l_MM + sev_left * l_MS)
            h_S = 1.0 / (1.0 + mild_left * l_SM + sev_left * l_SS)

            value = (
                comb(k, i1) * comb(n_sev, j1)
                * pi_M ** mild_left * pi_S ** sev_left
                * h_M ** i1 * h_S ** j1
            )
            for i in range(i1 + 1):
                c_i = comb(k - i, i1 - i) * h_M ** (i1 - i)
                for j in range(j1 + 1):
                    if i == i1 and j == j1:
                        continue
                    value -= c_i * comb(n_sev - j, j1 - j) * h_S ** (j1 - j) * P[i, j]

            if value < -slack or value > 1.0 + slack:
                raise IllConditionedError(
                    f"P({i1},{j1}) = {value:.3g} outside [0, 1] for n={n}, k={k}, pi=({pi_M:.4g}, {pi_S:.4g})",
                    value,
                )
            P[i1, j1] = value

    residual = abs(P.sum() - 1.0)
    if residual > defaults.addy.normalization_tolerance:
        logger.debug(f"Household table n={n}, k={k} sums to 1 - {residual:.3g}")
    return np.clip(P, 0.0, 1.0)


def household_final_size_means(
    n: int,
    k: int,
    lambda_L: Matrix2,
    pi: Tuple[float, float],
) -> Tuple[float, float]:
    P = household_final_size(n, k, lambda_L, pi)
    return (
        float(np.arange(k + 1) @ P.sum(axis=1)),
        float(np.arange(n - k + 1) @ P.sum(axis=0)),
    )


def type_weights(n: int, beta_M: float) -> np.ndarray:
    """Binomial(n, beta_M) weights over the number of mild-type members."""
    return np.exp(binom.logpmf(np.arange(n + 1), n, beta_M))


# ============================================================================
# Whole population
# ============================================================================

def mt_final_size_distribution(
    params: MtParams,
    dist: HouseholdSizeDistribution,
) -> FinalSizeDistribution:
    """Mix the single-household tables over k ~ Binomial(n, beta_M), using params.pi."""
    tables: Dict[int, np.ndarray] = {}
    for n in dist.sizes:
        table = empty_table(n)
        for k, w in enumerate(type_weights(n, params.beta_M)):
            if w == 0.0:
                continue
            P = household_final_size(n, k, params.lambda_L, params.pi)
            table[: k + 1, : n - k + 1] += w * P
        tables[n] = table
    return FinalSizeDistribution(tables)


def escape_probabilities(z: Tuple[float, float], global_rates: MtGlobalRates) -> Tuple[float, float]:
    """pi_M = exp(-(z_M G_MM + z_S G_SM)), pi_S = exp(-(z_M G_MS + z_S G_SS))."""
    (g_MM, g_MS), (g_SM, g_SS) = global_rates.rates
    z_M, z_S = z
    return exp(-(z_M * g_MM + z_S * g_SM)), exp(-(z_M * g_MS + z_S * g_SS))


def balance_map(
    z: Tuple[float, float],
    params: MtParams,
    global_rates: MtGlobalRates,
    dist: HouseholdSizeDistribution,
) -> Tuple[float, float]:
    """Right-hand side of the balance equations: attack fractions implied by z."""
    pi = escape_probabilities(z, global_rates)
    mu_H = mean_household_size(dist)
    acc_M = acc_S = 0.0
    for n in dist.active_sizes:
        rho = dist.rho(n)
        for k, w in enumerate(type_weights(n, params.beta_M)):
            if w == 0.0:
                continue
            m_M, m_S = household_final_size_means(n, k, params.lambda_L, pi)
            acc_M += rho * w * m_M
            acc_S += rho * w * m_S
    return acc_M / mu_H, acc_S / mu_H


def balance_residual(
    params: MtParams,
    global_rates: MtGlobalRates,
    dist: HouseholdSizeDistribution,
    z: Tuple[float, float],
) -> float:
    F = balance_map(z, params, global_rates, dist)
    return max(abs(F[0] - z[0]), abs(F[1] - z[1]))


@dataclass
class BalanceSolution:
    z_M: float
    z_S: float
    pi_M: float
    pi_S: float
    iterations: int
    subcritical: bool
    residual: float

    @property
    def pi(self) -> Tuple[float, float]:
        return (self.pi_M, self.pi_S)

    @property
    def attack_fraction(self) -> float:
        return self.z_M + self.z_S

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def solve_balance(
    params: MtParams,
    global_rates: MtGlobalRates,
    dist: HouseholdSizeDistribution,
) -> BalanceSolution:
    """
    Largest solution of the balance equations by fixed-point iteration from the
    all-infected corner (beta_M, 1 - beta_M).

    Damping kicks in once successive steps change sign. Iterates falling
    below the subcritical tolerance are reported as the trivial solution
    (z = 0, pi = 1). ``params.pi`` is ignored.
    """
    cfg = defaults.balance
    z = (params.beta_M, 1.0 - params.beta_M)
    damping = 1.0
    prev_step = (0.0, 0.0)

    for iteration in range(1, cfg.max_iterations + 1):
        F = balance_map(z, params, global_rates, dist)
        step = (F[0] - z[0], F[1] - z[1])
        if damping == 1.0 and any(s * p < 0 for s, p in zip(step, prev_step)):
            damping = cfg.damping
            logger.debug(f"Balance iteration oscillating at step {iteration}; damping {damping}")
        z = (z[0] + damping * step[0], z[1] + damping * step[1])
        prev_step = step

        if max(z) < cfg.subcritical_tolerance:
            logger.debug(f"Balance iteration collapsed to the trivial solution after {iteration} steps")
            return BalanceSolution(0.0, 0.0, 1.0, 1.0, iteration, True, 0.0)

        if max(abs(step[0]), abs(step[1])) * damping < cfg.tolerance:
            pi = escape_probabilities(z, global_rates)
            solution = BalanceSolution(
                z_M=z[0], z_S=z[1], pi_M=pi[0], pi_S=pi[1],
                iterations=iteration, subcritical=False,
                residual=balance_residual(params, global_rates, dist, z),
            )
            if solution.residual > cfg.residual_tolerance:
                logger.warning(
                    f"Balance residual {solution.residual:.3g} exceeds "
                    f"{cfg.residual_tolerance:.1g} after {iteration} steps"
                )
            logger.debug(json.dumps({"balance": solution.to_dict()}))
            return solution

    raise ConvergenceError(
        f"Balance iteration did not converge in {cfg.max_iterations} steps; last iterate {z}",
        last_iterate=z,
    )


def generate_mt_distribution(
    params: MtParams,
    global_rates: MtGlobalRates,
    dist: HouseholdSizeDistribution,
) -> Tuple[FinalSizeDistribution, BalanceSolution]:
    """Generation mode: solve for pi, then mix the household tables."""
    solution = solve_balance(params, global_rates, dist)
    fitted = params.with_escape(solution.pi_M, solution.pi_S)
    return mt_final_size_distribution(fitted, dist), solution
