"""
Asymptotic final-size distribution of the infector-dependent-severity (IDS) model.

As the number of households grows, the fraction of size-n households in each
configuration (n: i, j, k, l) follows a deterministic ODE. Households feel the
rest of the population only through the overall mild and severe infective
fractions i_M(t), i_S(t). Integrating from a tiny severe seed until the
infective mass falls below delta gives the final-size tables.
"""
import json
import logging
from dataclasses import dataclass, field
from math import comb
from typing import Any, Dict, List, Optional

import numpy as np
from scipy.integrate import solve_ivp

from hhsev.config.settings import defaults
from hhsev.core.distributions import FinalSizeDistribution, empty_table
from hhsev.core.errors import ConfigError, IntegrationError
from hhsev.core.params import IdsParams
from hhsev.core.population import HouseholdSizeDistribution, mean_household_size
from hhsev.core.state import StateIndex, enumerate_states

logger = logging.getLogger(__name__)


class IdsSystem:
    """Vectorized right-hand side of the household-state ODE for fixed parameters."""

    def __init__(self, params: IdsParams, dist: HouseholdSizeDistribution, index: Optional[StateIndex] = None):
        self.params = params
        self.dist = dist
        self.index = index or enumerate_states(dist.n_max)
        idx = self.index

        rho = np.array([dist.rho(int(n)) for n in idx.n])
        mu_H = mean_household_size(dist)
        self.w_M = idx.i * rho / mu_H
        self.w_S = idx.j * rho / mu_H

        p = params
        s = idx.s.astype(float)
        # Per-state local infection pressure, split by outcome severity.
        self.local_mild = s * (p.lambda_L_M * p.p_L_MM * idx.i + p.lambda_L_S * p.p_L_SM * idx.j)
        self.local_sev = s * (p.lambda_L_M * p.p_L_MS * idx.i + p.lambda_L_S * p.p_L_SS * idx.j)
        # Global pressure per unit of i_M and i_S.
        self.glob_mild = (s * p.lambda_G_M * p.p_G_MM, s * p.lambda_G_S * p.p_G_SM)
        self.glob_sev = (s * p.lambda_G_M * p.p_G_MS, s * p.lambda_G_S * p.p_G_SS)
        self.removal_M = p.gamma_M * idx.i.astype(float)
        self.removal_S = p.gamma_S * idx.j.astype(float)

        self.src_inf, self.tgt_inf_M, self.tgt_inf_S = self._targets(idx, idx.s > 0, [(1, 0, 0, 0), (0, 1, 0, 0)])
        self.src_rem_M, self.tgt_rem_M = self._targets(idx, idx.i > 0, [(-1, 0, 1, 0)])
        self.src_rem_S, self.tgt_rem_S = self._targets(idx, idx.j > 0, [(0, -1, 0, 1)])

    @staticmethod
    def _targets(idx: StateIndex, mask: np.ndarray, shifts) -> List[np.ndarray]:
        src = np.flatnonzero(mask)
        out = [src]
        for di, dj, dk, dl in shifts:
            out.append(np.array([
                idx.find(int(idx.n[a]), int(idx.i[a]) + di, int(idx.j[a]) + dj, int(idx.k[a]) + dk, int(idx.l[a]) + dl)
                for a in src
            ], dtype=np.int64))
        return out

    def infective_fractions(self, x: np.ndarray):
        return float(self.w_M @ x), float(self.w_S @ x)

    def rhs(self, t: float, x: np.ndarray) -> np.ndarray:
        i_M, i_S = self.infective_fractions(x)
        mild = self.glob_mild[0] * i_M + self.glob_mild[1] * i_S + self.local_mild
        sev = self.glob_sev[0] * i_M + self.glob_sev[1] * i_S + self.local_sev

        flow_mild = mild * x
        flow_sev = sev * x
        flow_rem_M = self.removal_M * x
        flow_rem_S = self.removal_S * x

        dx = -(flow_mild + flow_sev + flow_rem_M + flow_rem_S)
        s, r_M, r_S = self.src_inf, self.src_rem_M, self.src_rem_S
        np.add.at(dx, self.tgt_inf_M, flow_mild[s])
        np.add.at(dx, self.tgt_inf_S, flow_sev[s])
        np.add.at(dx, self.tgt_rem_M, flow_rem_M[r_M])
        np.add.at(dx, self.tgt_rem_S, flow_rem_S[r_S])
        return dx

    def initial_state(self, f_S: float) -> np.ndarray:
        """Each member independently severe-infective with probability f_S."""
        x0 = np.zeros(len(self.index))
        for n in self.index.sizes:
            for j in range(n + 1):
                x0[self.index.find(n, 0, j, 0, 0)] = comb(n, j) * f_S ** j * (1.0 - f_S) ** (n - j)
        return x0

    def size_totals(self, x: np.ndarray) -> Dict[int, float]:
        return {n: float(x[sl].sum()) for n, sl in self.index.offsets.items()}


def ids_rhs(xtilde: np.ndarray, params: IdsParams, dist: HouseholdSizeDistribution) -> np.ndarray:
    return IdsSystem(params, dist).rhs(0.0, np.asarray(xtilde, dtype=float))


@dataclass
class IdsSolution:
    distribution: FinalSizeDistribution
    diagnostics: Dict[str, Any] = field(default_factory=dict)


def integrate_ids(
    params: IdsParams,
    dist: HouseholdSizeDistribution,
    f_S: Optional[float] = None,
    delta: Optional[float] = None,
    max_horizon: Optional[float] = None,
    method: Optional[str] = None,
) -> IdsSolution:
    cfg = defaults.ids
    f_S = cfg.f_S if f_S is None else f_S
    delta = cfg.delta if delta is None else delta
    max_horizon = cfg.max_horizon if max_horizon is None else max_horizon
    if not 0.0 < delta < f_S < 1.0:
        raise ConfigError(f"need 0 < delta < f_S < 1, got delta={delta}, f_S={f_S}")

    system = IdsSystem(params, dist)
    x0 = system.initial_state(f_S)

    def extinct(t, x):
        i_M, i_S = system.infective_fractions(x)
        return i_M + i_S - delta

    extinct.terminal = True
    extinct.direction = -1

    sol = solve_ivp(
        system.rhs, (0.0, max_horizon), x0,
        method=method or cfg.method, rtol=cfg.rtol, atol=cfg.atol,
        events=[extinct],
    )
    drift = max(
        max(abs(v - 1.0) for v in system.size_totals(sol.y[:, c]).values())
        for c in range(sol.y.shape[1])
    )
    diagnostics: Dict[str, Any] = {
        "status": int(sol.status),
        "rhs_evaluations": int(sol.nfev),
        "steps": int(sol.t.size),
        "normalization_drift": drift,
    }
    if sol.status != 1 or not sol.t_events[0].size:
        diagnostics["message"] = sol.message
        raise IntegrationError(
            f"Infective mass did not fall below delta={delta:g} before t={max_horizon:g}: {sol.message}",
            diagnostics,
        )
    if drift > cfg.normalization_tolerance:
        logger.warning(f"Per-size normalization drifted by {drift:.3g} during integration")

    x_end = sol.y_events[0][0]
    i_M, i_S = system.infective_fractions(x_end)
    diagnostics.update({"t_end": float(sol.t_events[0][0]), "final_infective_mass": i_M + i_S})

    tables: Dict[int, np.ndarray] = {}
    deficiency: Dict[int, float] = {}
    flagged_negatives = 0
    for n in system.index.sizes:
        table = empty_table(n)
        for k in range(n + 1):
            for l in range(n + 1 - k):
                table[k, l] = x_end[system.index.find(n, 0, 0, k, l)]
        if table.min() < -cfg.negative_clamp:
            flagged_negatives += 1
            logger.warning(f"Negative final-size mass {table.min():.3g} for n={n}")
        table = np.clip(table, 0.0, None)
        deficiency[n] = 1.0 - float(table.sum())
        tables[n] = table / table.sum()
    diagnostics.update({"mass_deficiency": deficiency, "flagged_negatives": flagged_negatives})
    logger.debug(json.dumps({"ids_integration": diagnostics}, default=str))

    return IdsSolution(FinalSizeDistribution(tables, meta={"diagnostics": diagnostics}), diagnostics)


def ids_final_size(
    params: IdsParams,
    dist: HouseholdSizeDistribution,
    f_S: Optional[float] = None,
    delta: Optional[float] = None,
) -> FinalSizeDistribution:
    return integrate_ids(params, dist, f_S=f_S, delta=delta).distribution


def attack_fraction(distribution: FinalSizeDistribution, dist: HouseholdSizeDistribution) -> float:
    """Overall fraction of individuals ever infected."""
    total = sum(dist.rho(n) * sum(distribution.means(n)) for n in dist.active_sizes)
    return total / mean_household_size(dist)
