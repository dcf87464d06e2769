"""Radial inhomogeneous NLS with an inverse-square potential: ground states,
variational functionals, time evolution and experiment drivers."""

from .errors import (
    CertificationFailure,
    DegenerateField,
    NoConvergence,
    NonFiniteField,
    RefusesRun,
    StepFailure,
    SupportLoss,
    ValidationError,
)
from .model import ModelParams, RadialField, RadialGrid, Regime, RegimeTag, classify, make_grid, validate

__all__ = [
    "CertificationFailure",
    "DegenerateField",
    "ModelParams",
    "NoConvergence",
    "NonFiniteField",
    "RadialField",
    "RadialGrid",
    "RefusesRun",
    "Regime",
    "RegimeTag",
    "StepFailure",
    "SupportLoss",
    "ValidationError",
    "classify",
    "make_grid",
    "validate",
]
__version__ = "0.1.0"
