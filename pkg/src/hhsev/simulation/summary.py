"""Summaries of simulated batches: per-size attack probabilities, moments, histograms."""
import logging
from dataclasses import dataclass
from typing import Dict, List

import numpy as np
import pandas as pd
from scipy import stats

from hhsev.core.errors import ConfigError
from hhsev.simulation.simulator import SimOutcome, empirical_distribution

logger = logging.getLogger(__name__)


@dataclass
class SimulationSummary:
    per_size: pd.DataFrame
    moments: Dict[str, float]
    n_major: int
    n_total: int


def normal_moments(outcomes: List[SimOutcome]) -> Dict[str, float]:
    major = [o for o in outcomes if o.major]
    mild = np.array([o.mild_total for o in major], dtype=float)
    severe = np.array([o.severe_total for o in major], dtype=float)
    ddof = 1 if len(major) > 1 else 0
    return {
        "mean_mild": float(mild.mean()),
        "std_mild": float(mild.std(ddof=ddof)),
        "mean_severe": float(severe.mean()),
        "std_severe": float(severe.std(ddof=ddof)),
    }


def summarize(outcomes: List[SimOutcome]) -> SimulationSummary:
    """
    Per-size probabilities that a typical member of an initially fully
    susceptible household ends mild / severe / infected, over major outbreaks.
    """
    n_major = sum(o.major for o in outcomes)
    if n_major == 0:
        raise ConfigError("summarize needs at least one major outbreak")
    empirical = empirical_distribution(outcomes)
    return SimulationSummary(
        per_size=empirical.aggregates(),
        moments=normal_moments(outcomes),
        n_major=n_major,
        n_total=len(outcomes),
    )


def histogram_bins(outcomes: List[SimOutcome], bins: int = 30) -> pd.DataFrame:
    """Binned counts of mild and severe totals over major outbreaks."""
    major = [o for o in outcomes if o.major]
    frames = []
    for kind in ("mild_total", "severe_total"):
        values = np.array([getattr(o, kind) for o in major], dtype=float)
        if values.size == 0:
            continue
        counts, edges = np.histogram(values, bins=bins)
        frames.append(pd.DataFrame({
            "kind": kind,
            "bin_left": edges[:-1],
            "bin_right": edges[1:],
            "count": counts,
        }))
    if not frames:
        return pd.DataFrame(columns=["kind", "bin_left", "bin_right", "count"])
    return pd.concat(frames, ignore_index=True)


def normality_screen(values, max_skew: float = 0.25, max_excess_kurtosis: float = 0.5) -> Dict[str, object]:
    values = np.asarray(values, dtype=float)
    skew = float(stats.skew(values))
    kurt = float(stats.kurtosis(values))
    return {
        "skewness": skew,
        "excess_kurtosis": kurt,
        "passed": abs(skew) < max_skew and abs(kurt) < max_excess_kurtosis,
    }
