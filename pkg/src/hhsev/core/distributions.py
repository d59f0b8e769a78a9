"""Joint mild/severe household final-size distributions."""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from hhsev.core.errors import ConfigError
from hhsev.core.utils import read_csv, write_csv

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["n", "r_M", "r_S", "probability"]


def empty_table(n: int) -> np.ndarray:
    return np.zeros((n + 1, n + 1))


@dataclass
class FinalSizeDistribution:
    """
    Per household size n, a table p[r_M, r_S] of shape (n+1, n+1).

    Entries with r_M + r_S > n are structurally zero. ``empty`` marks an
    empirical distribution built from no data (every table is zero).
    """
    tables: Dict[int, np.ndarray]
    empty: bool = False
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        for n, table in self.tables.items():
            if table.shape != (n + 1, n + 1):
                raise ConfigError(f"table for n={n} has shape {table.shape}, expected {(n + 1, n + 1)}")

    @property
    def sizes(self) -> List[int]:
        return sorted(self.tables)

    @property
    def n_max(self) -> int:
        return max(self.tables)

    def __getitem__(self, n: int) -> np.ndarray:
        return self.tables[n]

    def cells(self, n: int) -> Iterator[Tuple[int, int, float]]:
        table = self.tables[n]
        for r_M in range(n + 1):
            for r_S in range(n + 1 - r_M):
                yield r_M, r_S, float(table[r_M, r_S])

    def total(self, n: int) -> float:
        return float(self.tables[n].sum())

    def max_normalization_error(self, sizes: Optional[Iterable[int]] = None) -> float:
        if self.empty:
            return 0.0
        return max(abs(self.total(n) - 1.0) for n in (self.sizes if sizes is None else sizes))

    def means(self, n: int) -> Tuple[float, float]:
        """Expected numbers of mild and severe removed in a size-n household."""
        table = self.tables[n]
        r = np.arange(n + 1)
        return float(r @ table.sum(axis=1)), float(r @ table.sum(axis=0))

    def aggregates(self) -> pd.DataFrame:
        """Per-size probabilities that a typical member ends mild, severe, or infected."""
        rows = []
        for n in self.sizes:
            mean_M, mean_S = self.means(n)
            p_M, p_S = mean_M / n, mean_S / n
            p_inf = p_M + p_S
            rows.append({
                "n": n,
                "p_M": p_M,
                "p_S": p_S,
                "p_INF": p_inf,
                "p_S_over_p_INF": p_S / p_inf if p_inf > 0 else float("nan"),
            })
        return pd.DataFrame(rows)

    def total_variation(self, other: "FinalSizeDistribution", weights: Dict[int, float] = None) -> float:
        """Per-size TV distance, averaged with ``weights`` (uniform if omitted)."""
        common = [n for n in self.sizes if n in other.tables]
        if weights is None:
            weights = {n: 1.0 / len(common) for n in common}
        return float(sum(
            weights.get(n, 0.0) * 0.5 * np.abs(self.tables[n] - other.tables[n]).sum()
            for n in common
        ))

    # ------------------------------------------------------------------
    # CSV (n, r_M, r_S, probability)
    # ------------------------------------------------------------------

    def to_frame(self) -> pd.DataFrame:
        rows = [
            (n, r_M, r_S, p)
            for n in self.sizes
            for r_M, r_S, p in self.cells(n)
        ]
        return pd.DataFrame(rows, columns=CSV_COLUMNS)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "FinalSizeDistribution":
        missing = [c for c in CSV_COLUMNS if c not in frame.columns]
        if missing:
            raise ConfigError(f"final-size CSV is missing columns {missing}")
        tables: Dict[int, np.ndarray] = {}
        for n, group in frame.groupby("n"):
            n = int(n)
            table = empty_table(n)
            for r_M, r_S, p in group[["r_M", "r_S", "probability"]].itertuples(index=False):
                if r_M + r_S > n or r_M < 0 or r_S < 0:
                    raise ConfigError(f"cell (r_M={r_M}, r_S={r_S}) is out of range for n={n}")
                table[int(r_M), int(r_S)] = float(p)
            tables[n] = table
        return cls(tables)

    def to_csv(self, path: Union[str, Path]) -> Path:
        return write_csv(self.to_frame(), path)

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "FinalSizeDistribution":
        return cls.from_frame(read_csv(path))
