"""Monotone fixed-point solvers for mean-field games of optimal production
with strategic complementarities."""

from .grid import SpaceGrid, TimeGrid, build_linear_grid, build_log_grid, build_time_grid
from .model import Aggregator, ModelKind, ModelSpec
from .hjb import solve_hjb
from .kfe import dirac_init, transport
from .fixedpoint import (
    EquilibriumResult,
    IterationConfig,
    NonConvergedError,
    banach_iterate,
    best_response,
    envelope_paths,
    equilibrium_reward,
    fictitious_play,
    solve_equilibrium,
)

__version__ = "0.1.0"

__all__ = [
    "Aggregator",
    "EquilibriumResult",
    "IterationConfig",
    "ModelKind",
    "ModelSpec",
    "NonConvergedError",
    "SpaceGrid",
    "TimeGrid",
    "banach_iterate",
    "best_response",
    "build_linear_grid",
    "build_log_grid",
    "build_time_grid",
    "dirac_init",
    "envelope_paths",
    "equilibrium_reward",
    "fictitious_play",
    "solve_equilibrium",
    "solve_hjb",
    "transport",
]
