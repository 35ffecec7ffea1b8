"""Exception types shared across the package."""

from __future__ import annotations


class ParseError(ValueError):
    """A data file could not be parsed; message carries file/row context."""


class ValidationError(ValueError):
    """A loaded instance violates structural invariants.

    Attributes
    ----------
    violations : list[str]
        Human-readable violation messages.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("instance validation failed:\n  " + "\n  ".join(self.violations))


class CalibrationError(ValueError):
    """A compensation mechanism cannot be calibrated (e.g. zero expected flow)."""


class NonConvergenceError(RuntimeError):
    """The interior-point iteration hit its limit before reaching tolerance.

    Attributes
    ----------
    residuals : dict
        Best (smallest) residuals reached, keyed by residual name.
    """

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = dict(residuals or {})
