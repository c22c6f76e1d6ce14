"""Simulation and numerical-verification lab for generalized St. Petersburg games."""

from .errors import ConfigError, DomainError, NumericalError, PetersburgError, ResourceError
from .game_model import GameParams, Regime
from .rng import DEFAULT_SEED, RngStream

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DEFAULT_SEED",
    "DomainError",
    "GameParams",
    "NumericalError",
    "PetersburgError",
    "Regime",
    "ResourceError",
    "RngStream",
]
