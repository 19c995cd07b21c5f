"""Certified upper bounds on attackers of lossy quantum position-verification games.

The package assembles noncommutative moment relaxations (NPA hierarchy) of
lossy monogamy-of-entanglement games, solves them with a conic interior-point
backend, and turns the resulting response-rate/error-rate trade-off curves
into loss thresholds and entanglement lower bounds.
"""

from qpvbounds.bloch import MeasurementFamily, family
from qpvbounds.games import GameSpec, compile_game, materialize
from qpvbounds.backend import SolverSettings, SolveReport, solve, certified_upper
from qpvbounds.bounds import (
    Curve,
    sweep_curve,
    extract_w,
    eta_threshold,
    tomamichel_bound,
    counting_margin,
    rounding_size,
    attacker_error_lower_bound,
)

__version__ = "0.1.0"

__all__ = [
    "MeasurementFamily",
    "family",
    "GameSpec",
    "compile_game",
    "materialize",
    "SolverSettings",
    "SolveReport",
    "solve",
    "certified_upper",
    "Curve",
    "sweep_curve",
    "extract_w",
    "eta_threshold",
    "tomamichel_bound",
    "counting_margin",
    "rounding_size",
    "attacker_error_lower_bound",
    "__version__",
]
