"""IDS household configurations and their dense index."""
from math import comb
from typing import Dict, Iterable, List, NamedTuple, Optional

import numpy as np

from hhsev.config.settings import defaults
from hhsev.core.errors import ConfigError


class HouseholdState(NamedTuple):
    """Size-n household with i mild / j severe infectives and k mild / l severe removed."""
    n: int
    i: int
    j: int
    k: int
    l: int

    @property
    def susceptibles(self) -> int:
        return self.n - self.i - self.j - self.k - self.l


class StateIndex:
    """
    Bijection between household states (one block per size) and 0..dim-1.

    Ordering: ascending n, then lexicographic (i, j, k, l). The per-state
    count arrays (``n``, ``i``, ``j``, ``k``, ``l``, ``s``) line up with the index.
    """

    def __init__(self, sizes: Iterable[int]):
        self.sizes: List[int] = sorted(set(int(n) for n in sizes))
        self.states: List[HouseholdState] = []
        self.offsets: Dict[int, slice] = {}
        for n in self.sizes:
            start = len(self.states)
            for i in range(n + 1):
                for j in range(n + 1 - i):
                    for k in range(n + 1 - i - j):
                        for l in range(n + 1 - i - j - k):
                            self.states.append(HouseholdState(n, i, j, k, l))
            self.offsets[n] = slice(start, len(self.states))
        self._lookup = {s: idx for idx, s in enumerate(self.states)}

        arr = np.array(self.states, dtype=np.int64).reshape(-1, 5)
        self.n, self.i, self.j, self.k, self.l = (arr[:, c] for c in range(5))
        self.s = self.n - self.i - self.j - self.k - self.l

    def __len__(self) -> int:
        return len(self.states)

    def index(self, state: HouseholdState) -> int:
        return self._lookup[state]

    def find(self, n: int, i: int, j: int, k: int, l: int) -> Optional[int]:
        """Index of (n: i, j, k, l), or None when the state does not exist."""
        return self._lookup.get(HouseholdState(n, i, j, k, l))

    @property
    def full_count(self) -> int:
        return len(self.states)

    @property
    def reduced_count(self) -> int:
        """Dimension after dropping one state per size via normalization."""
        return self.full_count - len(self.sizes)


def enumerate_states(n_max: int, sizes: Optional[Iterable[int]] = None) -> StateIndex:
    if not 1 <= n_max <= defaults.population.n_max_cap:
        raise ConfigError(f"n_max must lie in [1, {defaults.population.n_max_cap}], got {n_max}")
    return StateIndex(range(1, n_max + 1) if sizes is None else sizes)


def reduced_dimension(n_max: int) -> int:
    """Closed form C(n_max+5, 5) - n_max - 1 of the reduced state count."""
    return comb(n_max + 5, 5) - n_max - 1
