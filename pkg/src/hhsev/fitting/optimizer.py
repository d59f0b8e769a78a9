"""
Multi-start KL fitting of either model to household final-size data.

One run draws a start (rates ~ Exp(1), probabilities ~ U(0,1); the IDS model
keeps the best of several candidate starts) and runs a bounded Nelder-Mead
simplex. The simplex is restarted from its best point while evaluations
remain and the objective still improves by more than ``rel_tol``.
"""
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError
from scipy.optimize import Bounds, minimize

from hhsev.config.settings import defaults
from hhsev.core.distributions import FinalSizeDistribution
from hhsev.core.errors import ConfigError, NumericalError
from hhsev.core.params import IdsParams, ModelKind, MtParams, parameter_names
from hhsev.core.utils import derive_seed, make_rng
from hhsev.fitting.diagnostics import derived_quantities
from hhsev.fitting.kl import TargetData, kl_divergence
from hhsev.models.ids import ids_final_size
from hhsev.models.mt import mt_final_size_distribution

logger = logging.getLogger(__name__)

Theta = Union[MtParams, IdsParams]


@dataclass
class FitConfig:
    seed: int = 0
    max_evals: int = defaults.fitting.max_evals
    rel_tol: float = defaults.fitting.rel_tol
    penalty: float = defaults.fitting.penalty
    ids_candidate_starts: int = defaults.fitting.ids_candidate_starts
    probability_bounds: Tuple[float, float] = tuple(defaults.fitting.probability_bounds)
    rate_bounds: Tuple[float, float] = tuple(defaults.fitting.rate_bounds)
    gamma_bounds: Tuple[float, float] = tuple(defaults.fitting.gamma_bounds)
    f_S: float = defaults.ids.f_S
    delta: float = defaults.ids.delta
    keep_trace: bool = False

    def __post_init__(self):
        if self.max_evals < 1:
            raise ConfigError(f"max_evals must be >= 1, got {self.max_evals}")

    def bounds(self, model: ModelKind) -> Bounds:
        P, R, G = self.probability_bounds, self.rate_bounds, self.gamma_bounds
        if model is ModelKind.MT:
            box = [P, P, R, R, R, R, P]
        else:
            box = [R, R, R, R, P, P, P, P, G]
        lo, hi = zip(*box)
        return Bounds(np.array(lo, dtype=float), np.array(hi, dtype=float))


@dataclass
class FitResult:
    model: ModelKind
    theta_hat: Theta
    f_theta_hat: float
    start: np.ndarray
    run_index: int
    seed: int
    evaluations: int
    iterations: int
    converged: bool
    derived: Dict[str, float] = field(default_factory=dict)
    trace: Optional[List[float]] = None

    def to_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {"run_index": self.run_index, "seed": self.seed}
        row.update(self.theta_hat.to_dict())
        row.update({
            "f_theta_hat": self.f_theta_hat,
            "converged": self.converged,
            "evaluations": self.evaluations,
            "iterations": self.iterations,
        })
        row.update(self.derived)
        return row


def model_distribution(
    model: ModelKind,
    x: Sequence[float],
    target: TargetData,
    config: FitConfig,
) -> FinalSizeDistribution:
    if model is ModelKind.MT:
        return mt_final_size_distribution(MtParams.from_vector(x), target.dist)
    return ids_final_size(IdsParams.from_vector(x), target.dist, f_S=config.f_S, delta=config.delta)


class KlObjective:
    """f(theta) with penalty for infeasible points and a best-so-far trace."""

    def __init__(self, model: ModelKind, target: TargetData, config: FitConfig):
        self.model = model
        self.target = target
        self.config = config
        self.bounds = config.bounds(model)
        self.evaluations = 0
        self.best_f = math.inf
        self.best_x: Optional[np.ndarray] = None
        self.trace: List[float] = []

    def __call__(self, x: np.ndarray) -> float:
        x = np.clip(np.asarray(x, dtype=float), self.bounds.lb, self.bounds.ub)
        self.evaluations += 1
        try:
            f = kl_divergence(self.target, model_distribution(self.model, x, self.target, self.config))
        except (NumericalError, ValidationError, ConfigError) as exc:
            logger.debug(f"Objective evaluation failed at {x.tolist()}: {exc}")
            f = self.config.penalty
        if not math.isfinite(f):
            f = self.config.penalty
        if f < self.best_f:
            self.best_f, self.best_x = f, x.copy()
        self.trace.append(self.best_f)
        return f


def draw_start(model: ModelKind, rng: np.random.Generator, config: FitConfig) -> np.ndarray:
    """Rates ~ Exp(1), probabilities ~ U(0,1), clipped into the box."""
    if model is ModelKind.MT:
        x = np.concatenate([rng.uniform(size=2), rng.exponential(1.0, size=4), rng.uniform(size=1)])
    else:
        x = np.concatenate([rng.exponential(1.0, size=4), rng.uniform(size=4), rng.exponential(1.0, size=1)])
    b = config.bounds(model)
    return np.clip(x, b.lb, b.ub)


def fit_model(
    model: ModelKind,
    target: TargetData,
    config: Optional[FitConfig] = None,
    run_index: int = 0,
    start: Optional[Sequence[float]] = None,
) -> FitResult:
    config = config or FitConfig()
    model = ModelKind(model)
    seed = derive_seed(config.seed, run_index)
    rng = make_rng(seed)
    objective = KlObjective(model, target, config)

    if start is not None:
        x0 = np.clip(np.asarray(start, dtype=float), objective.bounds.lb, objective.bounds.ub)
        f0 = objective(x0)
    elif model is ModelKind.IDS:
        candidates = [draw_start(model, rng, config) for _ in range(config.ids_candidate_starts)]
        scored = [(objective(c), i) for i, c in enumerate(candidates)]
        f0, best = min(scored)
        x0 = candidates[best]
    else:
        x0 = draw_start(model, rng, config)
        f0 = objective(x0)

    best_x, best_f = x0.copy(), f0
    iterations = 0
    converged = False
    while objective.evaluations < config.max_evals:
        res = minimize(
            objective, best_x, method="Nelder-Mead", bounds=objective.bounds,
            options={
                "maxfev": config.max_evals - objective.evaluations,
                "xatol": 1e-9,
                "fatol": config.rel_tol * max(best_f, 1e-300),
                "adaptive": True,
            },
        )
        iterations += int(res.nit)
        previous = best_f
        if objective.best_f < best_f:
            best_x, best_f = objective.best_x.copy(), objective.best_f
        improvement = (previous - best_f) / previous if previous > 0 else 0.0
        if improvement < config.rel_tol:
            converged = objective.evaluations < config.max_evals
            break

    theta = MtParams.from_vector(best_x) if model is ModelKind.MT else IdsParams.from_vector(best_x)
    derived = derived_quantities(theta, target) if model is ModelKind.IDS else {}
    result = FitResult(
        model=model,
        theta_hat=theta,
        f_theta_hat=float(best_f),
        start=x0,
        run_index=run_index,
        seed=seed,
        evaluations=objective.evaluations,
        iterations=iterations,
        converged=converged,
        derived=derived,
        trace=objective.trace if config.keep_trace else None,
    )
    logger.debug(json.dumps({
        "fit": model.value, "run": run_index, "f": result.f_theta_hat,
        "evaluations": result.evaluations, "converged": converged,
    }))
    return result


# ============================================================================
# Multi-run
# ============================================================================

@dataclass
class MultiRunResult:
    results: List[FitResult]

    @property
    def best(self) -> FitResult:
        return min(self.results, key=lambda r: (r.f_theta_hat, r.run_index))

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_row() for r in self.results])

    def summary(self, fraction: float = defaults.fitting.trim_fraction) -> pd.DataFrame:
        return trimmed_summary(self.results, fraction)


def _fit_job(args) -> FitResult:
    model, target, config, run_index = args
    return fit_model(model, target, config, run_index=run_index)


def multi_run(
    model: ModelKind,
    target: TargetData,
    n_runs: int,
    config: Optional[FitConfig] = None,
    jobs: int = 1,
) -> MultiRunResult:
    """Independent runs with seeds derive_seed(config.seed, r); results in run order."""
    if n_runs < 1:
        raise ConfigError(f"n_runs must be >= 1, got {n_runs}")
    config = config or FitConfig()
    work = [(ModelKind(model), target, config, r) for r in range(n_runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_job, work))
    else:
        results = [_fit_job(w) for w in work]
    out = MultiRunResult(results)
    logger.info(f"{n_runs} {ModelKind(model).value} fits: best f = {out.best.f_theta_hat:.3e}")
    return out


def trimmed_summary(results: List[FitResult], fraction: float = defaults.fitting.trim_fraction) -> pd.DataFrame:
    """Mean and standard deviation over the best ``fraction`` of runs by f."""
    if not results:
        raise ConfigError("no fit results to summarize")
    keep = max(1, int(math.ceil(fraction * len(results))))
    best = sorted(results, key=lambda r: (r.f_theta_hat, r.run_index))[:keep]
    model = best[0].model
    columns = parameter_names(model) + ["f_theta_hat"] + sorted(best[0].derived)
    frame = pd.DataFrame([r.to_row() for r in best])[columns]
    ddof = 1 if len(best) > 1 else 0
    return pd.DataFrame({"mean": frame.mean(), "std": frame.std(ddof=ddof)})
