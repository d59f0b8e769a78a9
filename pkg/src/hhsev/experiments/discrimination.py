"""
Model discrimination experiments.

* cross-fit: fit each model to asymptotic data from each model (2x2 per size distribution);
* random sweep: draw parameters for one model, fit the other, record degeneracy;
* finite data: simulate, fit both models to the empirical distribution, count wins.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from hhsev.config.settings import defaults
from hhsev.core.distributions import FinalSizeDistribution
from hhsev.core.errors import ConfigError, MinorOutbreakError, NumericalError
from hhsev.core.params import IdsParams, ModelKind, MtGlobalRates, MtParams
from hhsev.core.population import HouseholdSizeDistribution, PopulationConfig
from hhsev.core.utils import derive_seed, make_rng
from hhsev.fitting.diagnostics import pseudo_diagnostics
from hhsev.fitting.kl import TargetData, kl_per_size_breakdown
from hhsev.fitting.optimizer import FitConfig, FitResult, model_distribution, multi_run
from hhsev.models.ids import attack_fraction, integrate_ids
from hhsev.models.mt import generate_mt_distribution
from hhsev.simulation.simulator import (
    InitialSeverity,
    SimConfig,
    SimOutcome,
    empirical_distribution,
    simulate_once,
)

logger = logging.getLogger(__name__)


# ============================================================================
# Specs and reports
# ============================================================================

@dataclass
class GeneratingModel:
    """Parameters that generate data: MT needs local params + global rates, IDS its nine."""
    model: ModelKind
    mt_params: Optional[MtParams] = None
    mt_global: Optional[MtGlobalRates] = None
    ids_params: Optional[IdsParams] = None

    def __post_init__(self):
        self.model = ModelKind(self.model)
        if self.model is ModelKind.MT and (self.mt_params is None or self.mt_global is None):
            raise ConfigError("MT data generation needs mt_params and mt_global")
        if self.model is ModelKind.IDS and self.ids_params is None:
            raise ConfigError("IDS data generation needs ids_params")

    def params_dict(self) -> Dict[str, float]:
        if self.model is ModelKind.MT:
            out = self.mt_params.to_dict()
            out.pop("pi_M"), out.pop("pi_S")
            out.update(self.mt_global.to_dict())
            return out
        return self.ids_params.to_dict()


@dataclass
class ExperimentSpec:
    kind: str  # cross_fit | sweep | finite_data
    dists: Dict[str, HouseholdSizeDistribution]
    generating: Dict[ModelKind, GeneratingModel] = field(default_factory=dict)
    sweep_model: Optional[ModelKind] = None
    data_mode: str = "asymptotic"
    m: Optional[int] = None
    cutoff: float = defaults.simulation.cutoff
    initial_severity: InitialSeverity = InitialSeverity.SEVERE
    runs_per_fit: int = defaults.discrimination.runs_per_fit
    n_datasets: Optional[int] = None
    overrides: Dict[str, float] = field(default_factory=dict)
    tie_local_probabilities: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("cross_fit", "sweep", "finite_data"):
            raise ConfigError(f"unknown experiment kind '{self.kind}'")
        if not self.dists:
            raise ConfigError("experiment needs at least one household size distribution")
        if self.runs_per_fit < 1:
            raise ConfigError("runs_per_fit must be >= 1")
        if self.n_datasets is None:
            self.n_datasets = {
                "sweep": defaults.discrimination.sweep_datasets,
                "finite_data": defaults.discrimination.finite_datasets,
            }.get(self.kind, 1)
        if self.n_datasets < 1:
            raise ConfigError("n_datasets must be >= 1")
        if self.data_mode not in ("asymptotic", "simulated"):
            raise ConfigError(f"unknown data mode '{self.data_mode}'")
        if self.kind == "finite_data":
            self.data_mode = "simulated"
        elif self.data_mode != "asymptotic":
            raise ConfigError(f"{self.kind} experiments run on asymptotic data only")
        if self.data_mode == "simulated" and (self.m is None or self.m < 1):
            raise ConfigError("simulated data mode needs m >= 1")
        if self.kind == "sweep" and self.sweep_model is None:
            raise ConfigError("sweep experiments need sweep_model")


@dataclass
class DegeneracyReport:
    """Distances from the regions where both models give the same final sizes. None: not applicable."""
    near_critical: Optional[float] = None
    ids_local_contact: Optional[float] = None
    ids_local_severity: Optional[float] = None
    mt_one_type: Optional[float] = None
    mt_escape: Optional[float] = None

    def flags(
        self,
        near_zero: float = defaults.discrimination.near_zero,
        critical_margin: float = defaults.discrimination.near_critical_margin,
    ) -> Dict[str, bool]:
        out = {}
        for name, value in asdict(self).items():
            if value is None:
                continue
            threshold = critical_margin if name == "near_critical" else near_zero
            out[name] = value < threshold
        return out

    @property
    def flagged(self) -> bool:
        return any(self.flags().values())

    def to_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {f"prox_{k}": v for k, v in asdict(self).items()}
        row.update({f"flag_{k}": v for k, v in self.flags().items()})
        return row


def degeneracy_report(
    generator: GeneratingModel,
    attack: float,
    pi: Optional[Tuple[float, float]] = None,
) -> DegeneracyReport:
    report = DegeneracyReport(near_critical=max(0.0, attack - defaults.discrimination.rejection_floor))
    if generator.model is ModelKind.IDS:
        p = generator.ids_params
        report.ids_local_contact = min(p.lambda_L_M, p.lambda_L_S / p.gamma_S)
        report.ids_local_severity = abs(p.p_L_MM - p.p_L_SM)
    else:
        beta = generator.mt_params.beta_M
        report.mt_one_type = min(beta, 1.0 - beta)
        if pi is not None:
            report.mt_escape = min(pi)
    return report


@dataclass
class GeneratedData:
    distribution: FinalSizeDistribution
    attack_fraction: float
    pi: Optional[Tuple[float, float]] = None
    subcritical: bool = False


def generate_asymptotic(generator: GeneratingModel, dist: HouseholdSizeDistribution) -> GeneratedData:
    if generator.model is ModelKind.MT:
        q, balance = generate_mt_distribution(generator.mt_params, generator.mt_global, dist)
        return GeneratedData(q, balance.attack_fraction, balance.pi, balance.subcritical)
    q = integrate_ids(generator.ids_params, dist).distribution
    attack = attack_fraction(q, dist)
    return GeneratedData(q, attack, None, attack < defaults.discrimination.rejection_floor)


# ============================================================================
# 2x2 cross-fit on asymptotic data
# ============================================================================

@dataclass
class CrossFitCell:
    dist_label: str
    fitted_model: ModelKind
    data_model: ModelKind
    best: FitResult
    breakdown: np.ndarray


@dataclass
class CrossFitTable:
    cells: List[CrossFitCell]

    def best_f(self, dist_label: str, fitted: ModelKind, data: ModelKind) -> float:
        for c in self.cells:
            if (c.dist_label, c.fitted_model, c.data_model) == (dist_label, fitted, data):
                return c.best.f_theta_hat
        raise KeyError((dist_label, fitted, data))

    def frame(self) -> pd.DataFrame:
        rows = []
        for c in self.cells:
            row = {
                "dist": c.dist_label,
                "fitted_model": c.fitted_model.value,
                "data_model": c.data_model.value,
                "best_f": c.best.f_theta_hat,
                "best_run": c.best.run_index,
            }
            row.update({f"kl_n{n + 1}": v for n, v in enumerate(c.breakdown)})
            rows.append(row)
        return pd.DataFrame(rows)

    def fits_frame(self) -> pd.DataFrame:
        rows = []
        for c in self.cells:
            row = {"dist": c.dist_label, "fitted_model": c.fitted_model.value, "data_model": c.data_model.value}
            row.update(c.best.to_row())
            rows.append(row)
        return pd.DataFrame(rows)


def cross_fit_table(
    generators: Dict[ModelKind, GeneratingModel],
    dists: Dict[str, HouseholdSizeDistribution],
    n_runs: int,
    config: Optional[FitConfig] = None,
    jobs: int = 1,
) -> CrossFitTable:
    config = config or FitConfig()
    models = (ModelKind.MT, ModelKind.IDS)
    missing = [m.value for m in models if m not in generators]
    if missing:
        raise ConfigError(f"cross-fit needs generating parameters for {missing}")

    cells = []
    for d_idx, (label, dist) in enumerate(dists.items()):
        dist.require_fittable()
        targets = {m: TargetData(generate_asymptotic(generators[m], dist).distribution, dist) for m in models}
        for f_idx, fitted in enumerate(models):
            for g_idx, data_model in enumerate(models):
                cell_config = replace(config, seed=derive_seed(config.seed, d_idx, f_idx, g_idx))
                target = targets[data_model]
                runs = multi_run(fitted, target, n_runs, cell_config, jobs=jobs)
                best = runs.best
                p = model_distribution(fitted, best.theta_hat.to_vector(), target, cell_config)
                cells.append(CrossFitCell(label, fitted, data_model, best, kl_per_size_breakdown(target, p)))
                logger.info(
                    f"[{label}] {fitted.label} fitted to {data_model.label} data: best f = {best.f_theta_hat:.3e}"
                )
    return CrossFitTable(cells)


# ============================================================================
# Random-parameter sweep
# ============================================================================

def draw_parameters(
    model: ModelKind,
    rng: np.random.Generator,
    overrides: Optional[Dict[str, float]] = None,
    tie_local_probabilities: bool = False,
) -> GeneratingModel:
    """Rates ~ Exp(1), probabilities ~ U(0,1); then apply fixed overrides."""
    overrides = overrides or {}
    if model is ModelKind.MT:
        g = rng.exponential(1.0, size=4)
        l = rng.exponential(1.0, size=4)
        values = {
            "lambda_G_MM": g[0], "lambda_G_MS": g[1], "lambda_G_SM": g[2], "lambda_G_SS": g[3],
            "lambda_L_MM": l[0], "lambda_L_MS": l[1], "lambda_L_SM": l[2], "lambda_L_SS": l[3],
            "beta_M": rng.uniform(),
        }
        _apply_overrides(values, overrides)
        v = {k: float(x) for k, x in values.items()}
        return GeneratingModel(
            model,
            mt_params=MtParams(
                lambda_L=((v["lambda_L_MM"], v["lambda_L_MS"]), (v["lambda_L_SM"], v["lambda_L_SS"])),
                beta_M=v["beta_M"],
            ),
            mt_global=MtGlobalRates(
                rates=((v["lambda_G_MM"], v["lambda_G_MS"]), (v["lambda_G_SM"], v["lambda_G_SS"]))
            ),
        )

    rates = rng.exponential(1.0, size=5)
    probs = rng.uniform(size=4)
    values = {
        "lambda_G_M": rates[0], "lambda_G_S": rates[1], "lambda_L_M": rates[2], "lambda_L_S": rates[3],
        "p_G_MM": probs[0], "p_G_SM": probs[1], "p_L_MM": probs[2], "p_L_SM": probs[3],
        "gamma_S": rates[4],
    }
    _apply_overrides(values, overrides)
    if tie_local_probabilities:
        values["p_L_SM"] = values["p_L_MM"]
    return GeneratingModel(model, ids_params=IdsParams(**{k: float(x) for k, x in values.items()}))


def _apply_overrides(values: Dict[str, float], overrides: Dict[str, float]) -> None:
    unknown = sorted(set(overrides) - set(values))
    if unknown:
        raise ConfigError(f"unknown parameter overrides {unknown}; expected a subset of {sorted(values)}")
    values.update(overrides)


@dataclass
class SweepRecord:
    dataset: int
    attempts: int
    generator: GeneratingModel
    attack_fraction: float
    best: FitResult
    report: DegeneracyReport

    def to_row(self) -> Dict[str, object]:
        row: Dict[str, object] = {"dataset": self.dataset, "attempts": self.attempts}
        row.update({f"gen_{k}": v for k, v in self.generator.params_dict().items()})
        row.update({
            "attack_fraction": self.attack_fraction,
            "fitted_model": self.best.model.value,
            "best_f": self.best.f_theta_hat,
        })
        row.update(self.report.to_row())
        return row


@dataclass
class SweepResult:
    generating_model: ModelKind
    records: List[SweepRecord]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.to_row() for r in self.records])


def _sweep_dataset(args) -> Optional[SweepRecord]:
    model, d, dist, runs_per_fit, config, overrides, tie = args
    rng = make_rng(derive_seed(config.seed, d))
    for attempt in range(1, defaults.discrimination.max_draw_attempts + 1):
        generator = draw_parameters(model, rng, overrides, tie)
        try:
            data = generate_asymptotic(generator, dist)
        except NumericalError as exc:
            logger.warning(f"Dataset {d}, attempt {attempt}: generation failed ({exc}); skipping draw")
            continue
        if data.subcritical:
            logger.debug(f"Dataset {d}, attempt {attempt}: subcritical draw rejected")
            continue

        target = TargetData(data.distribution, dist)
        fit_config = replace(config, seed=derive_seed(config.seed, d, 1))
        runs = multi_run(model.other, target, runs_per_fit, fit_config)
        return SweepRecord(
            dataset=d,
            attempts=attempt,
            generator=generator,
            attack_fraction=data.attack_fraction,
            best=runs.best,
            report=degeneracy_report(generator, data.attack_fraction, data.pi),
        )
    logger.warning(f"Dataset {d}: no supercritical draw in {defaults.discrimination.max_draw_attempts} attempts")
    return None


def random_parameter_sweep(
    generating_model: ModelKind,
    n_datasets: int,
    dist: HouseholdSizeDistribution,
    runs_per_fit: int = defaults.discrimination.runs_per_fit,
    config: Optional[FitConfig] = None,
    overrides: Optional[Dict[str, float]] = None,
    tie_local_probabilities: bool = False,
    jobs: int = 1,
) -> SweepResult:
    """Fit the other model to asymptotic data from random supercritical draws of ``generating_model``."""
    if n_datasets < 1:
        raise ConfigError(f"n_datasets must be >= 1, got {n_datasets}")
    dist.require_fittable()
    config = config or FitConfig()
    model = ModelKind(generating_model)
    work = [(model, d, dist, runs_per_fit, config, overrides, tie_local_probabilities) for d in range(n_datasets)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_sweep_dataset, work))
    else:
        records = [_sweep_dataset(w) for w in work]
    return SweepResult(model, [r for r in records if r is not None])


# ============================================================================
# Finite-population data
# ============================================================================

@dataclass
class FiniteDataRecord:
    dataset: int
    seed: int
    households_counted: int
    best_f: Dict[ModelKind, float]
    generating_model: ModelKind
    chi_square: float
    lambda_statistic: float
    dof: int

    @property
    def win(self) -> bool:
        return self.best_f[self.generating_model] < self.best_f[self.generating_model.other]

    def to_row(self) -> Dict[str, object]:
        return {
            "dataset": self.dataset,
            "seed": self.seed,
            "households_counted": self.households_counted,
            "best_f_mt": self.best_f[ModelKind.MT],
            "best_f_ids": self.best_f[ModelKind.IDS],
            "generating_model": self.generating_model.value,
            "correct_model_wins": self.win,
            "chi_square": self.chi_square,
            "lambda_statistic": self.lambda_statistic,
            "dof": self.dof,
        }


@dataclass
class FiniteDataResult:
    generating_model: ModelKind
    records: List[FiniteDataRecord]

    @property
    def wins(self) -> int:
        return sum(r.win for r in self.records)

    def frame(self) -> pd.DataFrame:
        """Rows ordered by the generating model's best f."""
        ordered = sorted(self.records, key=lambda r: r.best_f[self.generating_model])
        return pd.DataFrame([r.to_row() for r in ordered])


def simulate_major(config: SimConfig, dataset: int, attempts: int) -> SimOutcome:
    """Simulate until a major outbreak; attempt a uses seed derive_seed(config.seed, dataset, a)."""
    for attempt in Retrying(
        stop=stop_after_attempt(attempts),
        retry=retry_if_exception_type(MinorOutbreakError),
        reraise=True,
    ):
        with attempt:
            seed = derive_seed(config.seed, dataset, attempt.retry_state.attempt_number - 1)
            outcome = simulate_once(replace(config, seed=seed))
            if not outcome.major:
                logger.info(f"Dataset {dataset}: minor outbreak (seed {seed}); resimulating")
                raise MinorOutbreakError(f"minor outbreak for dataset {dataset}", seed)
    return outcome


def _finite_dataset(args) -> FiniteDataRecord:
    sim_config, d, dist, runs_per_fit, config, attempts = args
    outcome = simulate_major(sim_config, d, attempts)
    q = empirical_distribution([outcome])
    counted = int(sum(q.meta["households_counted"].values()))
    target = TargetData(q, dist, m=counted)

    best_f: Dict[ModelKind, float] = {}
    diagnostics = None
    for idx, fitted in enumerate((ModelKind.MT, ModelKind.IDS)):
        fit_config = replace(config, seed=derive_seed(config.seed, d, 1000 + idx))
        best = multi_run(fitted, target, runs_per_fit, fit_config).best
        best_f[fitted] = best.f_theta_hat
        if fitted is sim_config.model:
            p = model_distribution(fitted, best.theta_hat.to_vector(), target, fit_config)
            diagnostics = pseudo_diagnostics(target, p, n_params=len(best.theta_hat.to_vector()))
    return FiniteDataRecord(
        dataset=d,
        seed=outcome.seed,
        households_counted=counted,
        best_f=best_f,
        generating_model=sim_config.model,
        chi_square=diagnostics.chi_square,
        lambda_statistic=diagnostics.lambda_statistic,
        dof=diagnostics.dof,
    )


def finite_data_experiment(
    generator: GeneratingModel,
    dist: HouseholdSizeDistribution,
    n_datasets: int = defaults.discrimination.finite_datasets,
    m: int = defaults.discrimination.finite_households,
    runs_per_fit: int = defaults.discrimination.runs_per_fit,
    config: Optional[FitConfig] = None,
    cutoff: float = defaults.simulation.cutoff,
    initial_severity: InitialSeverity = InitialSeverity.SEVERE,
    jobs: int = 1,
) -> FiniteDataResult:
    if n_datasets < 1:
        raise ConfigError(f"n_datasets must be >= 1, got {n_datasets}")
    dist.require_fittable()
    config = config or FitConfig()
    sim_config = SimConfig(
        model=generator.model,
        population=PopulationConfig(dist=dist, m=m),
        mt_params=generator.mt_params,
        mt_global=generator.mt_global,
        ids_params=generator.ids_params,
        initial_severity=initial_severity,
        cutoff=cutoff,
        seed=config.seed,
    )
    attempts = defaults.simulation.resimulation_attempts
    work = [(sim_config, d, dist, runs_per_fit, config, attempts) for d in range(n_datasets)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_finite_dataset, work))
    else:
        records = [_finite_dataset(w) for w in work]
    result = FiniteDataResult(generator.model, records)
    logger.info(f"{generator.model.label} data: correct model wins {result.wins}/{n_datasets}")
    return result
