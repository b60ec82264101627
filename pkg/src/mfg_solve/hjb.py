"""Backward implicit upwind solve of the representative firm's HJB equation."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import model as mdl
from .generator import (
    Generator,
    NonMonotoneSchemeError,
    build_generator,
    hjb_system,
    solve_tridiagonal,
)
from ._io import fmt_row
from .grid import SpaceGrid, TimeGrid
from .model import ModelSpec

FORWARD = 1
BACKWARD = -1
# per-step policy iteration cap; 1 gives a single Howard improvement per step
DEFAULT_POLICY_SWEEPS = 50


@dataclass
class HJBSolution:
    """Value and policy on the ``(time node, space node)`` lattice.

    ``policy[k]`` is the control applied on ``[t_k, t_{k+1})``; it is the one
    that generated the matrix of backward step ``k``.  ``policy[K]`` is the
    feedback read off the terminal slice.
    """

    values: np.ndarray
    policy: np.ndarray
    generators: List[Generator] = field(repr=False, default_factory=list)
    sweeps: List[int] = field(repr=False, default_factory=list)


def optimal_control(dVdx, a_max: float):
    """Maximiser of ``a * dVdx - a**2 / 2`` over ``[0, a_max]``."""
    out = np.clip(np.asarray(dVdx, dtype=float), 0.0, a_max)
    return out[()] if out.ndim == 0 else out


def gradient(values: np.ndarray, grid: SpaceGrid, direction=FORWARD) -> np.ndarray:
    """One-sided difference, forward where ``direction > 0`` else backward.

    The last node has no forward neighbour and the first no backward one;
    there the available one-sided difference is used instead.
    """
    values = np.asarray(values, dtype=float)
    if values.shape != grid.nodes.shape:
        raise ValueError("slice length does not match the grid")
    diff = np.diff(values) / np.diff(grid.nodes)
    fwd = np.append(diff, diff[-1])
    bwd = np.insert(diff, 0, diff[0])
    direction = np.broadcast_to(np.asarray(direction), values.shape)
    return np.where(direction > 0, fwd, bwd)


def terminal_value(spec: ModelSpec, grid: SpaceGrid, m_T: float, T: float, discounted: bool):
    v = mdl.revenue(spec, grid.nodes, m_T)
    if discounted:
        v = np.exp(-spec.rho * T) * v
    return np.asarray(v, dtype=float)


def upwind_policy(spec: ModelSpec, grid: SpaceGrid, V: np.ndarray, base_drift: np.ndarray):
    """Control per node from one-sided gradients with upwind selection.

    Forward branch when its drift is positive (ties go forward), backward
    branch when its drift is negative, otherwise the control that makes the
    drift vanish, which then lies between the two one-sided controls.
    """
    vf = gradient(V, grid, FORWARD)
    vb = gradient(V, grid, BACKWARD)
    af = optimal_control(vf, spec.a_max)
    ab = optimal_control(vb, spec.a_max)
    bf = af + base_drift
    bb = ab + base_drift
    a0 = np.clip(-base_drift, 0.0, spec.a_max)
    use_f = bf > 0
    use_b = ~use_f & (bb < 0)
    return np.where(use_f, af, np.where(use_b, ab, a0))


def _base_drift(spec: ModelSpec, grid: SpaceGrid) -> np.ndarray:
    # drift is affine in the control: b(x, a) = a + b(x, 0)
    return np.asarray(mdl.drift(spec, grid.nodes, np.zeros(grid.n)), dtype=float)


def solve_hjb(
    spec: ModelSpec,
    grid: SpaceGrid,
    tgrid: TimeGrid,
    m,
    terminal_discounted: bool = False,
    policy_sweeps: int = DEFAULT_POLICY_SWEEPS,
    sweep_tol: float = 1e-9,
) -> HJBSolution:
    """Backward Euler in time, one tridiagonal solve per step.

    Each step starts from the control read off ``V^{k+1}``, then re-derives
    the control from the new ``V^k`` and re-solves until the value changes by
    less than ``sweep_tol`` relative to its sup norm (at most
    ``policy_sweeps`` solves).  ``policy_sweeps=1`` is the single Howard
    improvement variant.
    """
    m = np.asarray(m, dtype=float)
    K = tgrid.steps
    if m.shape != (K + 1,):
        raise ValueError("mean path needs one value per time node")
    if policy_sweeps < 1:
        raise ValueError("policy_sweeps must be >= 1")
    dt = tgrid.dt
    x = grid.nodes
    base = _base_drift(spec, grid)
    half_var = 0.5 * np.asarray(mdl.diffusion(spec, x), dtype=float) ** 2

    values = np.empty((K + 1, grid.n))
    policy = np.empty((K + 1, grid.n))
    gens: List[Generator] = [None] * K
    sweeps: List[int] = [0] * K
    values[K] = terminal_value(spec, grid, m[K], tgrid.horizon, terminal_discounted)
    policy[K] = upwind_policy(spec, grid, values[K], base)

    for k in range(K - 1, -1, -1):
        reward = np.asarray(mdl.revenue(spec, x, m[k]), dtype=float)
        V_next = values[k + 1]
        a = upwind_policy(spec, grid, V_next, base)
        V = V_next
        for sweep in range(policy_sweeps):
            if sweep > 0:
                a = upwind_policy(spec, grid, V, base)
            gen = build_generator(grid, a + base, half_var)
            ab = hjb_system(gen, dt, spec.rho)
            rhs = reward - 0.5 * a * a + V_next / dt
            V_new = solve_tridiagonal(ab, rhs)
            change = np.max(np.abs(V_new - V))
            V = V_new
            if sweep > 0 and change <= sweep_tol * max(1.0, np.max(np.abs(V))):
                break
        values[k] = V
        policy[k] = a
        gens[k] = gen
        sweeps[k] = sweep + 1
    return HJBSolution(values=values, policy=policy, generators=gens, sweeps=sweeps)


def write_fields_csv(path, grid: SpaceGrid, tgrid: TimeGrid, sol: HJBSolution) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "V", "alpha"])
        for k, t in enumerate(tgrid.nodes):
            for i, xi in enumerate(grid.nodes):
                w.writerow(fmt_row(t, xi, sol.values[k, i], sol.policy[k, i]))


def read_fields_csv(path):
    """Inverse of :func:`write_fields_csv`: ``(t, x, V, alpha)`` arrays."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = np.unique(data[:, 0])
    x = data[data[:, 0] == t[0], 1]
    shape = (t.size, x.size)
    return t, x, data[:, 2].reshape(shape), data[:, 3].reshape(shape)


__all__ = [
    "BACKWARD",
    "FORWARD",
    "HJBSolution",
    "NonMonotoneSchemeError",
    "gradient",
    "optimal_control",
    "solve_hjb",
    "upwind_policy",
]
