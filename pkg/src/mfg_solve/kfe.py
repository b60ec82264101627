"""Forward transport of the population law with the transposed HJB generator."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from . import model as mdl
from ._io import fmt_row
from .generator import NonMonotoneSchemeError, build_generator, kfe_system, solve_tridiagonal
from .grid import SpaceGrid, TimeGrid
from .model import ModelSpec

log = logging.getLogger(__name__)

MASS_TOL = 1e-10
NEG_TOL = 1e-12


@dataclass
class DistributionPath:
    mass: np.ndarray  # (K+1, N), one probability vector per time node
    max_mass_error: float = 0.0
    renormalized: int = 0

    def aggregates(self, spec: ModelSpec, grid: SpaceGrid) -> np.ndarray:
        return np.array([mdl.aggregate_unchecked(spec.aggregator, g, grid) for g in self.mass])


def dirac_init(grid: SpaceGrid, x0: float) -> np.ndarray:
    """Unit mass at ``x0``, split linearly between the two bracketing nodes."""
    x = grid.nodes
    if not x[0] <= x0 <= x[-1]:
        raise ValueError(f"x0={x0} lies outside [{x[0]}, {x[-1]}]")
    g = np.zeros(grid.n)
    j = int(np.searchsorted(x, x0))
    if x[j] == x0:
        g[j] = 1.0
        return g
    w = (x[j] - x0) / (x[j] - x[j - 1])
    g[j - 1] = w
    g[j] = 1.0 - w
    return g


def closed_loop_generator(spec: ModelSpec, grid: SpaceGrid, control: np.ndarray):
    """Generator of the state under a feedback control; identical to the HJB step matrix."""
    base = np.asarray(mdl.drift(spec, grid.nodes, np.zeros(grid.n)), dtype=float)
    half_var = 0.5 * np.asarray(mdl.diffusion(spec, grid.nodes), dtype=float) ** 2
    return build_generator(grid, control + base, half_var)


def step(gen, g: np.ndarray, dt: float) -> np.ndarray:
    return solve_tridiagonal(kfe_system(gen, dt), g)


def transport(
    spec: ModelSpec,
    grid: SpaceGrid,
    tgrid: TimeGrid,
    policy: np.ndarray,
    g0: np.ndarray,
) -> DistributionPath:
    """Implicit steps ``(I - dt A_k^T) g^{k+1} = g^k`` with ``A_k`` built from ``policy[k]``."""
    policy = np.asarray(policy, dtype=float)
    K = tgrid.steps
    if policy.ndim == 1:
        policy = np.broadcast_to(policy, (K + 1, grid.n))
    if policy.shape[0] < K or policy.shape[1] != grid.n:
        raise ValueError("policy dimensions do not match the grids")
    g0 = np.asarray(g0, dtype=float)
    if g0.shape != (grid.n,) or np.any(g0 < 0) or abs(g0.sum() - 1.0) > MASS_TOL:
        raise ValueError("g0 must be a probability mass vector on the grid")

    mass = np.empty((K + 1, grid.n))
    mass[0] = g0
    worst = 0.0
    renorm = 0
    for k in range(K):
        gen = closed_loop_generator(spec, grid, policy[k])
        g = step(gen, mass[k], tgrid.dt)
        lo = g.min()
        if lo < -NEG_TOL:
            raise NonMonotoneSchemeError(f"negative mass {lo:.3e} at step {k}")
        err = abs(g.sum() - 1.0)
        worst = max(worst, err)
        if lo < 0:
            g = np.maximum(g, 0.0)
            g /= g.sum()
        elif err > MASS_TOL:
            log.warning("mass drift %.3e at step %d; renormalising", err, k)
            g /= g.sum()
            renorm += 1
        mass[k + 1] = g
    return DistributionPath(mass=mass, max_mass_error=worst, renormalized=renorm)


def write_mass_csv(path, grid: SpaceGrid, tgrid: TimeGrid, dist: DistributionPath) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "mass"])
        for k, t in enumerate(tgrid.nodes):
            for i, x in enumerate(grid.nodes):
                w.writerow(fmt_row(t, x, dist.mass[k, i]))
