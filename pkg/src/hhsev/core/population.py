"""Household-size structure shared by both models."""
import logging
from typing import List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from hhsev.config.settings import defaults
from hhsev.core.errors import ConfigError

logger = logging.getLogger(__name__)


def validate_proportions(v: Tuple[float, ...]) -> Tuple[float, ...]:
    if len(v) == 0:
        raise ValueError("at least one household size is required")
    if len(v) > defaults.population.n_max_cap:
        raise ValueError(
            f"n_max = {len(v)} exceeds the configured cap {defaults.population.n_max_cap}"
        )
    if any((not np.isfinite(p)) or p < 0 for p in v):
        raise ValueError("proportions must be finite and nonnegative")
    total = float(np.sum(v))
    if abs(total - 1.0) > defaults.population.sum_tolerance:
        raise ValueError(f"proportions sum to {total:.12g}, expected 1")
    return tuple(float(p) for p in v)


class HouseholdSizeDistribution(BaseModel):
    """Limiting proportions rho_n of households of size n = 1..n_max."""
    model_config = ConfigDict(frozen=True)

    props: Tuple[float, ...]

    @field_validator("props")
    @classmethod
    def check_props(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        return validate_proportions(v)

    @property
    def n_max(self) -> int:
        return len(self.props)

    @property
    def sizes(self) -> range:
        return range(1, self.n_max + 1)

    def rho(self, n: int) -> float:
        return self.props[n - 1]

    @property
    def active_sizes(self) -> List[int]:
        return [n for n in self.sizes if self.rho(n) > 0]

    def require_fittable(self) -> None:
        """Both models need n_max >= 3 to be identifiable."""
        if self.n_max < 3:
            raise ConfigError(f"n_max = {self.n_max} is below 3; models are not identifiable")


def mean_household_size(dist: HouseholdSizeDistribution) -> float:
    return float(np.dot(np.arange(1, dist.n_max + 1), dist.props))


def realize_counts(dist: HouseholdSizeDistribution, m: int) -> List[int]:
    """Round rho_n * m to integers; the rounding remainder goes to the largest size."""
    if m < 1:
        raise ConfigError(f"number of households must be >= 1, got {m}")

    counts = [int(np.floor(p * m + 0.5)) for p in dist.props]
    remainder = m - sum(counts)
    n = dist.n_max
    # Walk down from the largest size so no count goes negative.
    while remainder != 0:
        if remainder > 0 and dist.rho(n) > 0:
            counts[n - 1] += remainder
            remainder = 0
        elif remainder < 0 and counts[n - 1] > 0:
            take = min(counts[n - 1], -remainder)
            counts[n - 1] -= take
            remainder += take
        n = n - 1 if n > 1 else dist.n_max
    return counts


class PopulationConfig(BaseModel):
    """A finite population of m households laid out by size."""
    model_config = ConfigDict(frozen=True)

    dist: HouseholdSizeDistribution
    m: int

    @model_validator(mode="after")
    def check_m(self) -> "PopulationConfig":
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        return self

    @property
    def counts(self) -> List[int]:
        return realize_counts(self.dist, self.m)

    @property
    def n_individuals(self) -> int:
        return sum(n * c for n, c in zip(self.dist.sizes, self.counts))
