"""Exception types shared across the package."""

from __future__ import annotations


class ValidationError(ValueError):
    """Inadmissible model parameters. ``constraint`` names the violated bound."""

    def __init__(self, constraint: str, message: str):
        super().__init__(f"{constraint}: {message}")
        self.constraint = constraint


class NonFiniteField(ValueError):
    pass


class DegenerateField(ValueError):
    pass


class SupportLoss(ValueError):
    """Raised when a dilation pushes mass outside the truncated domain."""


class NoConvergence(RuntimeError):
    pass


class CertificationFailure(RuntimeError):
    def __init__(self, failed: dict):
        names = ", ".join(f"{k}={v:.3e}" for k, v in failed.items())
        super().__init__(f"certificate defects above threshold: {names}")
        self.failed = failed


class StepFailure(RuntimeError):
    pass


class RefusesRun(RuntimeError):
    """An experiment whose entry conditions do not hold numerically."""
