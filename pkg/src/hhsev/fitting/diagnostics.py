"""Pseudolikelihood goodness-of-fit and identifiable functions of IDS parameters."""
import math
from dataclasses import asdict, dataclass
from math import comb
from typing import Dict, Optional, Tuple

from hhsev.core.distributions import FinalSizeDistribution
from hhsev.core.errors import ConfigError
from hhsev.core.params import IdsParams
from hhsev.core.population import HouseholdSizeDistribution, mean_household_size
from hhsev.fitting.kl import TargetData, kl_divergence


@dataclass
class PseudoDiagnostics:
    log_pseudolikelihood: float
    lambda_statistic: float  # -2 log Lambda_m
    chi_square: float
    dof: int

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def free_cells(dist: HouseholdSizeDistribution) -> int:
    """Cells of the triangular tables minus one normalization per size."""
    return sum(comb(n + 2, 2) - 1 for n in dist.active_sizes)


def pseudo_diagnostics(
    target: TargetData,
    p: FinalSizeDistribution,
    n_params: int,
    m: Optional[int] = None,
) -> PseudoDiagnostics:
    m = m if m is not None else target.m
    if m is None:
        raise ConfigError("pseudolikelihood diagnostics need the household count m")

    log_terms, chi_terms = [], []
    for n in target.dist.active_sizes:
        rho = target.dist.rho(n)
        m_n = rho * m
        for r_M in range(n + 1):
            for r_S in range(n + 1 - r_M):
                qv, pv = float(target.q[n][r_M, r_S]), float(p[n][r_M, r_S])
                if pv <= 0.0:
                    if qv > 0.0:
                        log_terms.append(-math.inf)
                        chi_terms.append(math.inf)
                    continue
                if qv > 0.0:
                    log_terms.append(rho * qv * math.log(pv))
                chi_terms.append((m_n * qv - m_n * pv) ** 2 / (m_n * pv))

    return PseudoDiagnostics(
        log_pseudolikelihood=m * math.fsum(log_terms),
        lambda_statistic=2.0 * m * kl_divergence(target, p),
        chi_square=math.fsum(chi_terms),
        dof=free_cells(target.dist) - n_params,
    )


def observed_attack_fractions(target: TargetData) -> Tuple[float, float]:
    """(z_M, z_S): overall mild and severe attack fractions implied by q."""
    mu_H = mean_household_size(target.dist)
    z_M = z_S = 0.0
    for n in target.dist.active_sizes:
        mean_M, mean_S = target.q.means(n)
        z_M += target.dist.rho(n) * mean_M
        z_S += target.dist.rho(n) * mean_S
    return z_M / mu_H, z_S / mu_H


def identifiability_functions(theta: IdsParams, z: Tuple[float, float]) -> Tuple[float, float, float]:
    """
    Combinations of IDS parameters that final-size data pin down well:
    global force (z-weighted), local severe contacts per infectious period,
    and the mild part of the global force.
    """
    z_M, z_S = z
    g_M = theta.lambda_G_M / theta.gamma_M
    g_S = theta.lambda_G_S / theta.gamma_S
    return (
        z_M * g_M + z_S * g_S,
        theta.lambda_L_S / theta.gamma_S,
        z_M * g_M * theta.p_G_MM + z_S * g_S * theta.p_G_SM,
    )


def global_escape_probability(target: TargetData) -> float:
    """pi_G = q_1(0,0): chance that an individual avoids global infection."""
    if 1 not in target.q.tables:
        raise ConfigError("global escape probability needs size-1 household data")
    return float(target.q[1][0, 0])


def size_one_mild_fraction(theta: IdsParams, z: Tuple[float, float]) -> float:
    """Approximate share of infected single-person households that are mild."""
    force, _, mild_force = identifiability_functions(theta, z)
    return mild_force / force if force > 0 else float("nan")


def observed_size_one_mild_fraction(target: TargetData) -> float:
    q1 = target.q[1]
    infected = q1[1, 0] + q1[0, 1]
    return float(q1[1, 0] / infected) if infected > 0 else float("nan")


def derived_quantities(theta: IdsParams, target: TargetData) -> Dict[str, float]:
    z = observed_attack_fractions(target)
    f1, f2, f3 = identifiability_functions(theta, z)
    out = {"global_force": f1, "local_severe_ratio": f2, "mild_global_force": f3,
           "size_one_mild_fraction": size_one_mild_fraction(theta, z)}
    if 1 in target.q.tables and target.dist.rho(1) > 0:
        out["implied_global_escape"] = math.exp(-f1)
        out["observed_global_escape"] = global_escape_probability(target)
        out["observed_size_one_mild_fraction"] = observed_size_one_mild_fraction(target)
    return out
