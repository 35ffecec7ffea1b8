"""Stochastic transmission-expansion equilibrium engine.

Solves the social planner's scenario-weighted dispatch-and-investment
QP, accounts per-country welfare effects of a candidate line, calibrates
welfare-compensation mechanisms, and evaluates them under risk metrics.
"""

from . import analytic, compensation, equilibrium, ingest, model, risk, welfare
from .errors import (CalibrationError, NonConvergenceError, ParseError,
                     ValidationError)

__version__ = "0.1.0"

__all__ = [
    "analytic", "compensation", "equilibrium", "ingest", "model", "risk",
    "welfare", "CalibrationError", "NonConvergenceError", "ParseError",
    "ValidationError", "__version__",
]
