"""Hyperfractal urban vehicular DTN toolkit: sampling, broadcast simulation, bounds and fitting."""

from .geometry import DomainError, HyperfractalParams, Orientation, Street, StreetGrid, params_from_df
from .mobility import SpeedProfile, kmh_to_units
from .sampler import Population, sample_population
from .simulation import SimConfig, SimResult, run

__version__ = "0.1.0"

__all__ = [
    "DomainError",
    "HyperfractalParams",
    "Orientation",
    "Population",
    "SimConfig",
    "SimResult",
    "SpeedProfile",
    "Street",
    "StreetGrid",
    "kmh_to_units",
    "params_from_df",
    "run",
    "sample_population",
]
