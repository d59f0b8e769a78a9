"""Household epidemic models with infector-dependent severity: final sizes, simulation, fitting and model discrimination."""

__version__ = "0.1.0"
