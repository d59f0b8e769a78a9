"""
Run-configuration documents.

A run config is a YAML file with optional sections ``population``, ``mt``,
``ids``, ``simulation``, ``fitting`` and ``experiment``. Any section may name a
packaged preset (``preset: rho5``); explicit keys override preset values.
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from hhsev.config.settings import defaults
from hhsev.core.errors import ConfigError
from hhsev.core.params import IdsParams, Matrix2, ModelKind, MtGlobalRates, MtParams
from hhsev.core.population import HouseholdSizeDistribution, PopulationConfig, validate_proportions
from hhsev.experiments.discrimination import ExperimentSpec, GeneratingModel
from hhsev.fitting.optimizer import FitConfig
from hhsev.simulation.simulator import InitialSeverity, SimConfig

logger = logging.getLogger(__name__)


def _merge_preset(data: Any) -> Any:
    """Expand ``preset: name`` into the preset's keys; explicit keys win."""
    if not isinstance(data, dict) or "preset" not in data:
        return data
    name = data["preset"]
    try:
        base = defaults.preset(name)
    except KeyError as e:
        raise ValueError(str(e).strip("'\""))
    if not isinstance(base, dict):
        base = {"props": base}
    merged = dict(base)
    merged.update({k: v for k, v in data.items() if k != "preset"})
    return merged


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ============================================================================
# Sections
# ============================================================================

class PopulationSection(_Section):
    props: Tuple[float, ...]
    m: Optional[int] = Field(None, ge=1)

    @model_validator(mode="before")
    @classmethod
    def expand_preset(cls, data: Any) -> Any:
        return _merge_preset(data)

    @field_validator("props")
    @classmethod
    def check_props(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        return validate_proportions(v)

    @property
    def dist(self) -> HouseholdSizeDistribution:
        return HouseholdSizeDistribution(props=self.props)


class MtSection(_Section):
    beta_M: float = Field(ge=0.0, le=1.0)
    lambda_L: Matrix2
    global_rates: Optional[Matrix2] = None
    pi_M: Optional[float] = Field(None, gt=0.0, le=1.0)
    pi_S: Optional[float] = Field(None, gt=0.0, le=1.0)
    gammas: Tuple[float, float] = (1.0, 1.0)

    @model_validator(mode="before")
    @classmethod
    def expand_preset(cls, data: Any) -> Any:
        return _merge_preset(data)

    @model_validator(mode="after")
    def check_escape(self) -> "MtSection":
        if (self.pi_M is None) != (self.pi_S is None):
            raise ValueError("pi_M and pi_S must be given together")
        if self.global_rates is None and self.pi_M is None:
            raise ValueError("either global_rates or both pi_M and pi_S are required")
        if any(g <= 0 for g in self.gammas):
            raise ValueError("gammas must be positive")
        return self

    def params(self) -> MtParams:
        if self.pi_M is not None:
            return MtParams(pi_M=self.pi_M, pi_S=self.pi_S, lambda_L=self.lambda_L, beta_M=self.beta_M)
        return MtParams(lambda_L=self.lambda_L, beta_M=self.beta_M)

    def global_model(self) -> Optional[MtGlobalRates]:
        return MtGlobalRates(rates=self.global_rates) if self.global_rates is not None else None


class IdsSection(_Section):
    lambda_G_M: float
    lambda_G_S: float
    lambda_L_M: float
    lambda_L_S: float
    p_G_MM: float
    p_G_SM: float
    p_L_MM: float
    p_L_SM: float
    gamma_S: float

    @model_validator(mode="before")
    @classmethod
    def expand_preset(cls, data: Any) -> Any:
        return _merge_preset(data)

    def params(self) -> IdsParams:
        return IdsParams(**self.model_dump())


class SimulationSection(_Section):
    replicates: int = Field(100, ge=1)
    cutoff: float = Field(defaults.simulation.cutoff, ge=0.0, le=1.0)
    initial_count: int = Field(defaults.simulation.initial_count, ge=0)
    initial_severity: str = defaults.simulation.initial_severity
    initial_household_size: Optional[int] = Field(None, ge=1)
    event_budget: int = Field(defaults.simulation.event_budget, ge=1)

    @field_validator("initial_severity")
    @classmethod
    def check_severity(cls, v: str) -> str:
        if v not in ("severe", "mild", "by_type"):
            raise ValueError(f"initial_severity must be one of severe, mild, by_type; got '{v}'")
        return v


class FittingSection(_Section):
    runs: int = Field(100, ge=1)
    max_evals: int = Field(defaults.fitting.max_evals, ge=1)
    rel_tol: float = Field(defaults.fitting.rel_tol, gt=0.0)
    penalty: float = Field(defaults.fitting.penalty, gt=0.0)
    ids_candidate_starts: int = Field(defaults.fitting.ids_candidate_starts, ge=1)
    f_S: float = Field(defaults.ids.f_S, gt=0.0, lt=1.0)
    delta: float = Field(defaults.ids.delta, gt=0.0, lt=1.0)
    keep_trace: bool = False
    m: Optional[int] = Field(None, ge=1)

    @model_validator(mode="after")
    def check_seeding(self) -> "FittingSection":
        if not self.delta < self.f_S:
            raise ValueError(f"delta ({self.delta}) must be below f_S ({self.f_S})")
        return self


class ExperimentSection(_Section):
    kind: str
    dists: Dict[str, PopulationSection] = Field(default_factory=dict)
    models: List[ModelKind] = Field(default_factory=lambda: [ModelKind.MT, ModelKind.IDS])
    sweep_model: Optional[ModelKind] = None
    data_mode: str = "asymptotic"
    m: Optional[int] = Field(None, ge=1)
    runs_per_fit: int = Field(defaults.discrimination.runs_per_fit, ge=1)
    n_datasets: Optional[int] = Field(None, ge=1)
    overrides: Dict[str, float] = Field(default_factory=dict)
    tie_local_probabilities: bool = False

    @field_validator("kind")
    @classmethod
    def check_kind(cls, v: str) -> str:
        if v not in ("cross_fit", "sweep", "finite_data"):
            raise ValueError(f"kind must be one of cross_fit, sweep, finite_data; got '{v}'")
        return v


class RunConfig(_Section):
    seed: int = Field(0, ge=0)
    population: Optional[PopulationSection] = None
    mt: Optional[MtSection] = None
    ids: Optional[IdsSection] = None
    simulation: SimulationSection = Field(default_factory=SimulationSection)
    fitting: FittingSection = Field(default_factory=FittingSection)
    experiment: Optional[ExperimentSection] = None

    def require(self, section: str) -> Any:
        value = getattr(self, section)
        if value is None:
            raise ConfigError(f"{section}: section is required for this command")
        return value

    def snapshot(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


# ============================================================================
# Loading
# ============================================================================

def format_validation_error(error: ValidationError, prefix: str = "") -> str:
    """One line per problem, each starting with the dotted field path."""
    lines = []
    for item in error.errors():
        path = ".".join(str(p) for p in item["loc"])
        if prefix:
            path = f"{prefix}.{path}" if path else prefix
        message = item["msg"]
        if message.startswith("Value error, "):
            message = message[len("Value error, "):]
        lines.append(f"{path or '<root>'}: {message}")
    return "; ".join(lines)


def parse_run_config(data: Any) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("run config must be a mapping of sections")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(format_validation_error(e)) from e


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Config file not found at {path}")
    with open(path, "r") as f:
        try:
            data = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: not valid YAML ({e})") from e
    config = parse_run_config(data)
    logger.debug(f"Loaded run config from {path}")
    return config


def population_config(config: RunConfig, m: Optional[int] = None) -> PopulationConfig:
    section = config.require("population")
    m = m or section.m
    if m is None:
        raise ConfigError("population.m: household count is required for simulation")
    return PopulationConfig(dist=section.dist, m=m)


# ============================================================================
# Builders
# ============================================================================

def fit_config(config: RunConfig, seed: Optional[int] = None) -> FitConfig:
    section = config.fitting
    return FitConfig(
        seed=config.seed if seed is None else seed,
        max_evals=section.max_evals,
        rel_tol=section.rel_tol,
        penalty=section.penalty,
        ids_candidate_starts=section.ids_candidate_starts,
        f_S=section.f_S,
        delta=section.delta,
        keep_trace=section.keep_trace,
    )


def generating_models(config: RunConfig) -> Dict[ModelKind, GeneratingModel]:
    """Generators for every model whose section is present and complete enough to generate data."""
    out: Dict[ModelKind, GeneratingModel] = {}
    if config.mt is not None and config.mt.global_rates is not None:
        out[ModelKind.MT] = GeneratingModel(ModelKind.MT, mt_params=config.mt.params(), mt_global=config.mt.global_model())
    if config.ids is not None:
        out[ModelKind.IDS] = GeneratingModel(ModelKind.IDS, ids_params=config.ids.params())
    return out


def sim_config(
    config: RunConfig,
    model: ModelKind,
    seed: Optional[int] = None,
    cutoff: Optional[float] = None,
) -> SimConfig:
    model = ModelKind(model)
    section = config.simulation
    mt = config.require("mt") if model is ModelKind.MT else None
    if mt is not None and mt.global_rates is None:
        raise ConfigError("mt.global_rates: required for simulation")
    return SimConfig(
        model=model,
        population=population_config(config),
        mt_params=mt.params() if mt is not None else None,
        mt_global=mt.global_model() if mt is not None else None,
        mt_gammas=mt.gammas if mt is not None else (1.0, 1.0),
        ids_params=config.require("ids").params() if model is ModelKind.IDS else None,
        initial_count=section.initial_count,
        initial_severity=InitialSeverity(section.initial_severity),
        initial_household_size=section.initial_household_size,
        cutoff=section.cutoff if cutoff is None else cutoff,
        seed=config.seed if seed is None else seed,
        event_budget=section.event_budget,
    )


def experiment_spec(config: RunConfig, seed: Optional[int] = None) -> ExperimentSpec:
    section = config.experiment
    if section is None:
        raise ConfigError("experiment: section is required for this command")
    dists = {label: d.dist for label, d in section.dists.items()}
    if not dists and config.population is not None:
        dists = {"population": config.population.dist}
    if not dists:
        raise ConfigError("experiment.dists: at least one household size distribution is required")

    generating = {k: g for k, g in generating_models(config).items() if k in section.models}
    if section.kind == "finite_data" and not generating:
        raise ConfigError(f"experiment.models: no generating parameters for {[m.value for m in section.models]}")
    return ExperimentSpec(
        kind=section.kind,
        dists=dists,
        generating=generating,
        sweep_model=section.sweep_model,
        data_mode=section.data_mode,
        m=section.m,
        cutoff=config.simulation.cutoff,
        initial_severity=InitialSeverity(config.simulation.initial_severity),
        runs_per_fit=section.runs_per_fit,
        n_datasets=section.n_datasets,
        overrides=section.overrides,
        tie_local_probabilities=section.tie_local_probabilities,
        seed=config.seed if seed is None else seed,
    )
