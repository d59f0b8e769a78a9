"""Exception hierarchy shared across the package.

The CLI maps the three families onto exit codes: ``ConfigError`` -> 2,
``NumericalError`` -> 3, ``OSError`` -> 4.
"""
from typing import Any, Dict, Optional, Tuple


class HhsevError(Exception):
    """Root of all package errors."""


class ConfigError(HhsevError, ValueError):
    """Invalid configuration or parameter values."""


class NumericalError(HhsevError, ArithmeticError):
    """A solver, integrator or simulator could not produce a trustworthy result."""


class IllConditionedError(NumericalError):
    def __init__(self, message: str, value: float):
        super().__init__(message)
        self.value = value


class ConvergenceError(NumericalError):
    def __init__(self, message: str, last_iterate: Tuple[float, float]):
        super().__init__(message)
        self.last_iterate = last_iterate


class IntegrationError(NumericalError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SimulationBudgetError(NumericalError):
    def __init__(self, message: str, events: int, seed: int):
        super().__init__(message)
        self.events = events
        self.seed = seed


class MinorOutbreakError(HhsevError):
    """A simulated epidemic stayed below the major-outbreak cutoff."""

    def __init__(self, message: str, seed: int):
        super().__init__(message)
        self.seed = seed
