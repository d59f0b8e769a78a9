"""
Exact event-driven simulation of both household models in a finite population.

The engine samples the embedded jump chain of the continuous-time Markov
chain. Every infective of severity a carries three competing clocks: removal
(gamma_a), global contact (total rate G_a, target drawn uniformly from the
relevant pool) and local contact (bounded by c_max[a] and thinned to the
infective's actual local rate). Contacts that land on a non-susceptible have
no effect, so thinning keeps the chain exact. Only the final state matters, so
holding times are not drawn.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from hhsev.config.settings import defaults
from hhsev.core.distributions import FinalSizeDistribution, empty_table
from hhsev.core.errors import ConfigError, SimulationBudgetError
from hhsev.core.params import MILD, SEVERE, IdsParams, ModelKind, MtGlobalRates, MtParams
from hhsev.core.population import PopulationConfig
from hhsev.core.utils import derive_seed, make_rng

logger = logging.getLogger(__name__)

SUSCEPTIBLE, INFECTIVE, REMOVED = 0, 1, 2


class InitialSeverity(str, Enum):
    SEVERE = "severe"
    MILD = "mild"
    BY_TYPE = "by_type"


@dataclass
class SimConfig:
    model: ModelKind
    population: PopulationConfig
    mt_params: Optional[MtParams] = None
    mt_global: Optional[MtGlobalRates] = None
    mt_gammas: Tuple[float, float] = (1.0, 1.0)
    ids_params: Optional[IdsParams] = None
    initial_count: int = defaults.simulation.initial_count
    initial_severity: InitialSeverity = InitialSeverity(defaults.simulation.initial_severity)
    initial_household_size: Optional[int] = None
    cutoff: float = defaults.simulation.cutoff
    seed: int = 0
    event_budget: int = defaults.simulation.event_budget

    def __post_init__(self):
        self.model = ModelKind(self.model)
        self.initial_severity = InitialSeverity(self.initial_severity)
        if self.model is ModelKind.MT and (self.mt_params is None or self.mt_global is None):
            raise ConfigError("MT simulation needs mt_params and mt_global")
        if self.model is ModelKind.IDS:
            if self.ids_params is None:
                raise ConfigError("IDS simulation needs ids_params")
            if self.initial_severity is InitialSeverity.BY_TYPE:
                raise ConfigError("initial_severity 'by_type' applies to the MT model only")
        if any(g <= 0 for g in self.mt_gammas):
            raise ConfigError(f"removal rates must be positive, got {self.mt_gammas}")
        if not 0.0 <= self.cutoff <= 1.0:
            raise ConfigError(f"cutoff must lie in [0, 1], got {self.cutoff}")
        if self.initial_count < 0:
            raise ConfigError("initial_count must be nonnegative")
        size = self.placement_size
        if not 1 <= size <= self.population.dist.n_max:
            raise ConfigError(f"initial household size {size} is outside 1..{self.population.dist.n_max}")
        available = self.population.counts[size - 1]
        if self.initial_count > available:
            raise ConfigError(
                f"{self.initial_count} initial infectives need distinct households of size {size}; only {available} exist"
            )

    @property
    def placement_size(self) -> int:
        return self.initial_household_size or self.population.dist.n_max


@dataclass
class SimOutcome:
    seed: int
    mild_total: int
    severe_total: int
    attack_fraction: float
    major: bool
    events: int
    n_initial: int = 0
    initial_mild: int = 0
    # Z_n(r_M, r_S) over households with no initial infective.
    household_counts: Dict[int, np.ndarray] = field(default_factory=dict)

    def to_row(self) -> Dict[str, object]:
        return {
            "seed": self.seed,
            "mild_total": self.mild_total,
            "severe_total": self.severe_total,
            "attack_fraction": self.attack_fraction,
            "major": self.major,
            "events": self.events,
            "n_initial": self.n_initial,
            "initial_mild": self.initial_mild,
        }


class _UniformStream:
    """Buffered U(0,1) draws; scalar calls into the generator are slow."""

    def __init__(self, rng: np.random.Generator, block: int = 8192):
        self._rng = rng
        self._block = block
        self._buf: List[float] = []
        self._pos = 0

    def __call__(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._rng.random(self._block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


class HouseholdEpidemic:
    """One realization of either model on a fixed household layout."""

    def __init__(self, config: SimConfig, seed: int):
        self.config = config
        self.seed = seed
        self.rng = make_rng(seed)
        self.uniform = _UniformStream(self.rng)

        dist = config.population.dist
        self.house_size: List[int] = []
        for n, count in zip(dist.sizes, config.population.counts):
            self.house_size.extend([n] * count)
        self.house_start: List[int] = np.concatenate(([0], np.cumsum(self.house_size)[:-1])).astype(int).tolist()
        self.N = int(sum(self.house_size))
        self.house_of: List[int] = np.repeat(np.arange(len(self.house_size)), self.house_size).tolist()

        self.status = [SUSCEPTIBLE] * self.N
        self.severity = [-1] * self.N
        self.infectives: Tuple[List[int], List[int]] = ([], [])
        self.seeded_houses = set()
        self.initial = set()

        if config.model is ModelKind.MT:
            self._setup_mt()
        else:
            self._setup_ids()

    # ------------------------------------------------------------------
    # Model-specific rates
    # ------------------------------------------------------------------

    def _setup_mt(self):
        p, g = self.config.mt_params, self.config.mt_global
        self.types: List[int] = np.where(self.rng.random(self.N) < p.beta_M, MILD, SEVERE).tolist()
        self.members_by_type = ([], [])
        for ind, t in enumerate(self.types):
            self.members_by_type[t].append(ind)
        n_by_type = (len(self.members_by_type[MILD]), len(self.members_by_type[SEVERE]))

        self.gamma = tuple(self.config.mt_gammas)
        G = g.array
        self.glob_weights = [[G[a, b] * n_by_type[b] / self.N for b in (MILD, SEVERE)] for a in (MILD, SEVERE)]
        self.glob = [sum(w) for w in self.glob_weights]

        L = p.lambda_L
        self.local_rate = [0.0] * self.N
        cmax = [0.0, 0.0]
        for h, n in enumerate(self.house_size):
            start = self.house_start[h]
            members = range(start, start + n)
            for i in members:
                a = self.types[i]
                c = sum(L[a][self.types[j]] for j in members if j != i)
                self.local_rate[i] = c
                cmax[a] = max(cmax[a], c)
        self.cmax = cmax

    def _setup_ids(self):
        p = self.config.ids_params
        self.types = None
        self.gamma = p.gammas
        self.glob = [p.lambda_G_M, p.lambda_G_S]
        self.local_per_contact = (p.lambda_L_M, p.lambda_L_S)
        self.p_global_mild = (p.p_G_MM, p.p_G_SM)
        self.p_local_mild = (p.p_L_MM, p.p_L_SM)
        largest = max(self.house_size) if self.house_size else 1
        self.cmax = [lam * (largest - 1) for lam in self.local_per_contact]

    # ------------------------------------------------------------------
    # State changes
    # ------------------------------------------------------------------

    def _infect(self, ind: int, sev: int):
        self.status[ind] = INFECTIVE
        self.severity[ind] = sev
        self.infectives[sev].append(ind)

    def _remove(self, sev: int, slot: int):
        bucket = self.infectives[sev]
        ind = bucket[slot]
        last = bucket.pop()
        if last != ind:
            bucket[slot] = last
        self.status[ind] = REMOVED

    def _seed_initial(self):
        cfg = self.config
        size = cfg.placement_size
        wanted = cfg.initial_severity
        mt = cfg.model is ModelKind.MT

        def eligible(h: int) -> List[int]:
            start = self.house_start[h]
            members = list(range(start, start + size))
            if mt and wanted is InitialSeverity.SEVERE:
                return [i for i in members if self.types[i] == SEVERE]
            if mt and wanted is InitialSeverity.MILD:
                return [i for i in members if self.types[i] == MILD]
            return members

        candidates = [h for h, n in enumerate(self.house_size) if n == size and eligible(h)]
        if len(candidates) < cfg.initial_count:
            raise ConfigError(
                f"only {len(candidates)} households of size {size} can host a '{wanted.value}' initial infective"
            )
        chosen = self.rng.choice(candidates, size=cfg.initial_count, replace=False) if cfg.initial_count else []
        for h in sorted(int(h) for h in chosen):
            members = eligible(h)
            ind = members[int(self.uniform() * len(members))]
            if mt:
                sev = self.types[ind]
            else:
                sev = SEVERE if wanted is InitialSeverity.SEVERE else MILD
            self._infect(ind, sev)
            self.seeded_houses.add(h)
            self.initial.add(ind)

    def _new_severity_global(self, source: int, target: int) -> int:
        if self.types is not None:
            return self.types[target]
        return MILD if self.uniform() < self.p_global_mild[source] else SEVERE

    def _new_severity_local(self, source: int, target: int) -> int:
        if self.types is not None:
            return self.types[target]
        return MILD if self.uniform() < self.p_local_mild[source] else SEVERE

    # ------------------------------------------------------------------
    # Event loop
    # ------------------------------------------------------------------

    def run(self) -> SimOutcome:
        self._seed_initial()
        U = self.uniform
        total_rate = [self.gamma[a] + self.glob[a] + self.cmax[a] for a in (MILD, SEVERE)]
        budget = self.config.event_budget
        events = 0
        inf = self.infectives

        while inf[MILD] or inf[SEVERE]:
            events += 1
            if events > budget:
                raise SimulationBudgetError(
                    f"event budget {budget} exceeded (seed {self.seed})", events=events, seed=self.seed
                )
            r_mild = len(inf[MILD]) * total_rate[MILD]
            r_sev = len(inf[SEVERE]) * total_rate[SEVERE]
            u = U() * (r_mild + r_sev)
            a = MILD if u < r_mild else SEVERE
            bucket = inf[a]
            slot = int(U() * len(bucket))
            v = U() * total_rate[a]

            if v < self.gamma[a]:
                self._remove(a, slot)
                continue

            if v < self.gamma[a] + self.glob[a]:
                if self.types is not None:
                    w_mild, w_sev = self.glob_weights[a]
                    pool = self.members_by_type[MILD if U() * (w_mild + w_sev) < w_mild else SEVERE]
                    target = pool[int(U() * len(pool))]
                else:
                    target = int(U() * self.N)
                if self.status[target] == SUSCEPTIBLE:
                    self._infect(target, self._new_severity_global(a, target))
                continue

            source = bucket[slot]
            target = self._local_target(a, source)
            if target is not None and self.status[target] == SUSCEPTIBLE:
                self._infect(target, self._new_severity_local(a, target))

        return self._outcome(events)

    def _local_target(self, a: int, source: int) -> Optional[int]:
        """Thinned local contact by ``source``; None when the proposal is rejected."""
        h = self.house_of[source]
        n = self.house_size[h]
        start = self.house_start[h]
        U = self.uniform
        if self.types is not None:
            c = self.local_rate[source]
            u = U() * self.cmax[a]
            if u >= c:
                return None
            row = self.config.mt_params.lambda_L[a]
            for j in range(start, start + n):
                if j == source:
                    continue
                u -= row[self.types[j]]
                if u < 0:
                    return j
            return None
        c = self.local_per_contact[a] * (n - 1)
        if U() * self.cmax[a] >= c:
            return None
        j = start + int(U() * (n - 1))
        return j + 1 if j >= source else j

    def _outcome(self, events: int) -> SimOutcome:
        dist = self.config.population.dist
        Z = {n: np.zeros((n + 1, n + 1), dtype=np.int64) for n in dist.sizes}
        mild = severe = 0
        for h, n in enumerate(self.house_size):
            start = self.house_start[h]
            r_M = r_S = 0
            for i in range(start, start + n):
                if self.status[i] == REMOVED and i not in self.initial:
                    if self.severity[i] == MILD:
                        r_M += 1
                    else:
                        r_S += 1
            mild += r_M
            severe += r_S
            if h not in self.seeded_houses:
                Z[n][r_M, r_S] += 1

        attack = (mild + severe + len(self.initial)) / self.N
        return SimOutcome(
            seed=self.seed,
            mild_total=mild,
            severe_total=severe,
            attack_fraction=attack,
            major=attack > self.config.cutoff,
            events=events,
            n_initial=len(self.initial),
            initial_mild=sum(self.severity[i] == MILD for i in self.initial),
            household_counts=Z,
        )


# ============================================================================
# Public API
# ============================================================================

def simulate_once(config: SimConfig) -> SimOutcome:
    return HouseholdEpidemic(config, config.seed).run()


def _simulate_seed(args: Tuple[SimConfig, int]) -> SimOutcome:
    config, seed = args
    return simulate_once(replace(config, seed=seed))


@dataclass
class BatchResult:
    outcomes: List[SimOutcome]
    empirical: FinalSizeDistribution

    @property
    def n_major(self) -> int:
        return sum(o.major for o in self.outcomes)


def empirical_distribution(outcomes: List[SimOutcome]) -> FinalSizeDistribution:
    """Pool Z_n over major outbreaks and normalize per size."""
    major = [o for o in outcomes if o.major]
    sizes = sorted(outcomes[0].household_counts) if outcomes else []
    if not major:
        logger.warning("No replicate exceeded the major-outbreak cutoff; empirical distribution is empty")
        return FinalSizeDistribution({n: empty_table(n) for n in sizes}, empty=True)

    tables = {}
    counted = {}
    for n in sizes:
        pooled = sum(o.household_counts[n] for o in major).astype(float)
        counted[n] = int(pooled.sum())
        tables[n] = pooled / counted[n] if counted[n] else pooled
    return FinalSizeDistribution(tables, meta={"households_counted": counted, "n_major": len(major)})


def run_batch(config: SimConfig, replicates: int, jobs: int = 1) -> BatchResult:
    """Replicate i runs with seed derive_seed(config.seed, i); results keep replicate order."""
    if replicates < 1:
        raise ConfigError(f"replicates must be >= 1, got {replicates}")
    work = [(config, derive_seed(config.seed, i)) for i in range(replicates)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_simulate_seed, work, chunksize=max(1, replicates // (4 * jobs))))
    else:
        outcomes = [_simulate_seed(w) for w in work]

    n_major = sum(o.major for o in outcomes)
    logger.info(f"Simulated {replicates} replicates ({config.model.value}): {n_major} major outbreaks")
    return BatchResult(outcomes, empirical_distribution(outcomes))
