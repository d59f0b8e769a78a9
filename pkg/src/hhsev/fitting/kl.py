"""Household-size-weighted Kullback-Leibler distance between final-size distributions."""
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from hhsev.config.settings import defaults
from hhsev.core.distributions import FinalSizeDistribution
from hhsev.core.errors import ConfigError
from hhsev.core.population import HouseholdSizeDistribution


@dataclass
class TargetData:
    """Data q to fit, the size weights rho, and the household count m when finite."""
    q: FinalSizeDistribution
    dist: HouseholdSizeDistribution
    m: Optional[int] = None

    def __post_init__(self):
        if self.q.empty:
            raise ConfigError("target distribution is empty")
        missing = [n for n in self.dist.active_sizes if n not in self.q.tables]
        if missing:
            raise ConfigError(f"target distribution has no table for household sizes {missing}")
        tol = (
            defaults.fitting.empirical_normalization_tolerance
            if self.m is not None
            else defaults.fitting.asymptotic_normalization_tolerance
        )
        error = self.q.max_normalization_error(self.dist.active_sizes)
        if error > tol:
            raise ConfigError(f"target tables are not normalized: max |sum - 1| = {error:.3g} > {tol:.1g}")
        if self.m is not None and self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")


def _cell_terms(q: np.ndarray, p: np.ndarray) -> List[float]:
    terms = []
    for qv, pv in zip(q.ravel().tolist(), p.ravel().tolist()):
        if qv <= 0.0:
            continue
        if pv <= 0.0:
            return [math.inf]
        terms.append(qv * math.log(qv / pv))
    return terms


def kl_per_size_breakdown(target: TargetData, p: FinalSizeDistribution) -> np.ndarray:
    """rho_n * sum q_n log(q_n / p_n) for each size n = 1..n_max (exact form)."""
    out = np.zeros(target.dist.n_max)
    for n in target.dist.active_sizes:
        out[n - 1] = target.dist.rho(n) * math.fsum(_cell_terms(target.q[n], p[n]))
    return out


def kl_exact(target: TargetData, p: FinalSizeDistribution) -> float:
    terms = []
    for n in target.dist.active_sizes:
        rho = target.dist.rho(n)
        terms.extend(rho * t for t in _cell_terms(target.q[n], p[n]))
    return math.fsum(terms)


def kl_taylor(target: TargetData, p: FinalSizeDistribution) -> float:
    """Second-order form sum rho_n (q - p)^2 / (2 p), free of log cancellation."""
    terms = []
    for n in target.dist.active_sizes:
        rho = target.dist.rho(n)
        for qv, pv in zip(target.q[n].ravel().tolist(), p[n].ravel().tolist()):
            if pv > 0.0:
                terms.append(rho * (qv - pv) ** 2 / (2.0 * pv))
            elif qv > 0.0:
                return math.inf
    return math.fsum(terms)


def kl_divergence(target: TargetData, p: FinalSizeDistribution) -> float:
    """
    Exact KL, replaced by the Taylor form when the exact value is below the
    switchover threshold. Infinite when p misses a cell that q supports.
    """
    value = kl_exact(target, p)
    if value < defaults.fitting.kl_switchover:
        return kl_taylor(target, p)
    return value
