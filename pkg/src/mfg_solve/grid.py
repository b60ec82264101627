"""Spatial and temporal grids shared by every PDE solve."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SpaceGrid:
    """Strictly increasing spatial nodes with cached one-sided spacings.

    ``spacing_fwd[i] = nodes[i+1] - nodes[i]`` and ``spacing_bwd[i] =
    nodes[i] - nodes[i-1]``.  At the edges the missing neighbour is replaced
    by the adjacent gap so both arrays have one entry per node.
    """

    nodes: np.ndarray
    spacing: str = "linear"
    spacing_fwd: np.ndarray = field(init=False, repr=False)
    spacing_bwd: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("a space grid needs at least 3 nodes")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("grid nodes must be finite")
        gaps = np.diff(nodes)
        if np.any(gaps <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        fwd = np.append(gaps, gaps[-1])
        bwd = np.insert(gaps, 0, gaps[0])
        fwd.setflags(write=False)
        bwd.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "spacing_fwd", fwd)
        object.__setattr__(self, "spacing_bwd", bwd)

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def x_min(self) -> float:
        return float(self.nodes[0])

    @property
    def x_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def resolution(self) -> float:
        """Largest gap in the coordinate the grid is uniform in (log for log grids)."""
        if self.spacing == "log":
            return float(np.max(np.diff(np.log(self.nodes))))
        return float(np.max(np.diff(self.nodes)))


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    dt: float
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        k = int(round(self.horizon / self.dt))
        nodes = np.linspace(0.0, self.horizon, k + 1)
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def steps(self) -> int:
        return self.nodes.size - 1

    def __len__(self) -> int:
        return self.nodes.size


def build_log_grid(x_min: float, x_max: float, n: int) -> SpaceGrid:
    """Nodes uniformly spaced in ``log x`` with exact endpoints."""
    if not (x_min > 0 and x_max > 0):
        raise ValueError("log grid bounds must be positive")
    if not x_min < x_max:
        raise ValueError("x_min must be smaller than x_max")
    if n < 3:
        raise ValueError("log grid needs n >= 3")
    nodes = np.exp(np.linspace(np.log(x_min), np.log(x_max), n))
    nodes[0], nodes[-1] = x_min, x_max
    return SpaceGrid(nodes, spacing="log")


def build_linear_grid(x_min: float, x_max: float, n: int) -> SpaceGrid:
    if not x_min < x_max:
        raise ValueError("x_min must be smaller than x_max")
    if n < 3:
        raise ValueError("linear grid needs n >= 3")
    return SpaceGrid(np.linspace(x_min, x_max, n), spacing="linear")


def build_time_grid(T: float, dt: float) -> TimeGrid:
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    if dt > T:
        raise ValueError("dt must not exceed T")
    ratio = T / dt
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError(f"T/dt = {ratio!r} is not an integer")
    return TimeGrid(float(T), float(T) / round(ratio))
