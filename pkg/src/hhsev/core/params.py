"""Parameter vectors for the multitype (MT) and infector-dependent-severity (IDS) models.

Removal rates are normalized so that gamma_M = 1 in both models; the MT model
also fixes gamma_S = 1 when fitting. Complementary severity probabilities
(p_xS = 1 - p_xM) are derived, never stored.
"""
from enum import Enum
from typing import ClassVar, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

Matrix2 = Tuple[Tuple[float, float], Tuple[float, float]]

MILD, SEVERE = 0, 1


class ModelKind(str, Enum):
    MT = "mt"
    IDS = "ids"

    @property
    def other(self) -> "ModelKind":
        return ModelKind.IDS if self is ModelKind.MT else ModelKind.MT

    @property
    def label(self) -> str:
        return "MT-HH" if self is ModelKind.MT else "IDS-HH"


def _check_rate_matrix(v: Matrix2) -> Matrix2:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("rates must be finite and nonnegative")
    return ((float(arr[0, 0]), float(arr[0, 1])), (float(arr[1, 0]), float(arr[1, 1])))


class MtParams(BaseModel):
    """
    Identifiable MT parameters: escape probabilities, local rates, mild-type probability.

    lambda_L[a][b] is the rate at which an infective of type a contacts a given
    housemate of type b (row: infector, column: infectee; index 0 mild, 1 severe).
    pi_M / pi_S default to 1 so a generation config can omit them; the balance
    solver supplies them.
    """
    model_config = ConfigDict(frozen=True)

    pi_M: float = Field(1.0, gt=0.0, le=1.0)
    pi_S: float = Field(1.0, gt=0.0, le=1.0)
    lambda_L: Matrix2
    beta_M: float = Field(ge=0.0, le=1.0)

    NAMES: ClassVar[Tuple[str, ...]] = (
        "pi_M", "pi_S", "lambda_L_MM", "lambda_L_MS", "lambda_L_SM", "lambda_L_SS", "beta_M",
    )

    @field_validator("lambda_L")
    @classmethod
    def check_lambda(cls, v: Matrix2) -> Matrix2:
        return _check_rate_matrix(v)

    @property
    def pi(self) -> Tuple[float, float]:
        return (self.pi_M, self.pi_S)

    def with_escape(self, pi_M: float, pi_S: float) -> "MtParams":
        return self.model_copy(update={"pi_M": float(pi_M), "pi_S": float(pi_S)})

    def to_vector(self) -> np.ndarray:
        (a, b), (c, d) = self.lambda_L
        return np.array([self.pi_M, self.pi_S, a, b, c, d, self.beta_M])

    @classmethod
    def from_vector(cls, x) -> "MtParams":
        x = [float(v) for v in x]
        return cls(pi_M=x[0], pi_S=x[1], lambda_L=((x[2], x[3]), (x[4], x[5])), beta_M=x[6])

    def to_dict(self) -> Dict[str, float]:
        return dict(zip(self.NAMES, self.to_vector().tolist()))


class MtGlobalRates(BaseModel):
    """Global contact rates, used only for data generation and simulation."""
    model_config = ConfigDict(frozen=True)

    rates: Matrix2

    @field_validator("rates")
    @classmethod
    def check_rates(cls, v: Matrix2) -> Matrix2:
        return _check_rate_matrix(v)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.rates, dtype=float)

    def to_dict(self) -> Dict[str, float]:
        (a, b), (c, d) = self.rates
        return {"lambda_G_MM": a, "lambda_G_MS": b, "lambda_G_SM": c, "lambda_G_SS": d}


class IdsParams(BaseModel):
    """The nine identifiable IDS parameters (gamma_M = 1)."""
    model_config = ConfigDict(frozen=True)

    lambda_G_M: float = Field(ge=0.0)
    lambda_G_S: float = Field(ge=0.0)
    lambda_L_M: float = Field(ge=0.0)
    lambda_L_S: float = Field(ge=0.0)
    p_G_MM: float = Field(ge=0.0, le=1.0)
    p_G_SM: float = Field(ge=0.0, le=1.0)
    p_L_MM: float = Field(ge=0.0, le=1.0)
    p_L_SM: float = Field(ge=0.0, le=1.0)
    gamma_S: float = Field(gt=0.0)

    NAMES: ClassVar[Tuple[str, ...]] = (
        "lambda_G_M", "lambda_G_S", "lambda_L_M", "lambda_L_S",
        "p_G_MM", "p_G_SM", "p_L_MM", "p_L_SM", "gamma_S",
    )
    RATE_NAMES: ClassVar[Tuple[str, ...]] = ("lambda_G_M", "lambda_G_S", "lambda_L_M", "lambda_L_S", "gamma_S")

    @property
    def gamma_M(self) -> float:
        return 1.0

    @property
    def p_G_MS(self) -> float:
        return 1.0 - self.p_G_MM

    @property
    def p_G_SS(self) -> float:
        return 1.0 - self.p_G_SM

    @property
    def p_L_MS(self) -> float:
        return 1.0 - self.p_L_MM

    @property
    def p_L_SS(self) -> float:
        return 1.0 - self.p_L_SM

    @property
    def gammas(self) -> Tuple[float, float]:
        return (1.0, self.gamma_S)

    def to_vector(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in self.NAMES], dtype=float)

    @classmethod
    def from_vector(cls, x) -> "IdsParams":
        return cls(**{name: float(v) for name, v in zip(cls.NAMES, x)})

    def to_dict(self) -> Dict[str, float]:
        return dict(zip(self.NAMES, self.to_vector().tolist()))


def parameter_names(model: ModelKind) -> List[str]:
    return list(MtParams.NAMES if model is ModelKind.MT else IdsParams.NAMES)
