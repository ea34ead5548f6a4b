"""optrans: LP solver and structure verifier for finite persuasion problems."""

from . import errors, grids, lp, nad, presets, structure
from .grids import Grid, cell_masses, from_points, log_spaced, uniform
from .model import (
    AssumptionReport,
    Outcome,
    Posterior,
    Problem,
    Signal,
    chi,
    check_assumptions,
    full_disclosure_signal,
    full_disclosure_value,
    gamma,
    gamma_binary,
    indirect_utility,
    no_disclosure_signal,
    signal_to_outcome,
)

__all__ = [
    "errors",
    "grids",
    "lp",
    "nad",
    "presets",
    "structure",
    "Grid",
    "uniform",
    "log_spaced",
    "from_points",
    "cell_masses",
    "Problem",
    "Posterior",
    "Signal",
    "Outcome",
    "AssumptionReport",
    "gamma",
    "gamma_binary",
    "chi",
    "check_assumptions",
    "indirect_utility",
    "signal_to_outcome",
    "full_disclosure_signal",
    "no_disclosure_signal",
    "full_disclosure_value",
]

__version__ = "0.1.0"
