import yaml
from pathlib import Path
from typing import Dict, Any, List, Tuple
from pydantic import BaseModel
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Environment settings. Only output location and parallelism are overridable."""
    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore")

    HHSEV_OUT_DIR: str = "results"
    HHSEV_JOBS: int = 1


# ============================================================================
# Packaged numerical defaults
# ============================================================================

class PopulationDefaults(BaseModel):
    n_max_cap: int
    sum_tolerance: float


class BalanceDefaults(BaseModel):
    tolerance: float
    subcritical_tolerance: float
    max_iterations: int
    damping: float
    residual_tolerance: float


class AddyDefaults(BaseModel):
    ill_conditioning_slack: float
    normalization_tolerance: float


class IdsDefaults(BaseModel):
    f_S: float
    delta: float
    rtol: float
    atol: float
    max_horizon: float
    method: str
    negative_clamp: float
    normalization_tolerance: float


class SimulationDefaults(BaseModel):
    cutoff: float
    event_budget: int
    initial_count: int
    initial_severity: str
    resimulation_attempts: int


class FittingDefaults(BaseModel):
    kl_switchover: float
    penalty: float
    max_evals: int
    rel_tol: float
    ids_candidate_starts: int
    trim_fraction: float
    probability_bounds: Tuple[float, float]
    rate_bounds: Tuple[float, float]
    gamma_bounds: Tuple[float, float]
    empirical_normalization_tolerance: float
    asymptotic_normalization_tolerance: float


class DiscriminationDefaults(BaseModel):
    rejection_floor: float
    near_zero: float
    near_critical_margin: float
    sweep_datasets: int
    runs_per_fit: int
    finite_datasets: int
    finite_households: int
    max_draw_attempts: int


class NumericalDefaults(BaseModel):
    population: PopulationDefaults
    balance: BalanceDefaults
    addy: AddyDefaults
    ids: IdsDefaults
    simulation: SimulationDefaults
    fitting: FittingDefaults
    discrimination: DiscriminationDefaults
    presets: Dict[str, Any]

    def preset(self, name: str) -> Any:
        if name not in self.presets:
            raise KeyError(f"Unknown preset '{name}'. Available: {sorted(self.presets)}")
        return self.presets[name]


def load_defaults() -> NumericalDefaults:
    """Load the packaged numerical defaults from YAML."""
    defaults_path = Path(__file__).parent / "defaults.yaml"
    if not defaults_path.exists():
        raise FileNotFoundError(f"Defaults file not found at {defaults_path}")

    with open(defaults_path, "r") as f:
        return NumericalDefaults.model_validate(yaml.safe_load(f))


def preset_proportions(name: str) -> List[float]:
    return list(defaults.preset(name))


settings = Settings()
defaults = load_defaults()
