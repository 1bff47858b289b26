"""Numerical laboratory for ground-state preparation of an n-level atom
weakly coupled to a bosonic field with a slowly decaying coupling."""
from .errors import (
    AssumptionViolation,
    ConfigError,
    DecompositionError,
    DegenerateSpectrumError,
    GuardError,
    ParameterError,
    RecurrenceWarning,
    PrecisionWarning,
    StepSizeError,
)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation",
    "ConfigError",
    "DecompositionError",
    "DegenerateSpectrumError",
    "GuardError",
    "ParameterError",
    "RecurrenceWarning",
    "PrecisionWarning",
    "StepSizeError",
    "BACKEND",
]
