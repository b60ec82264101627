"""Outer equilibrium iterations on the best-response map.

``best_response`` maps a mean path ``m`` to the aggregate of the population
that optimally responds to it.  Equilibria are its fixed points; iterating
it from the envelope paths (or from constants outside them) reaches the
minimal and maximal equilibria.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.integrate import trapezoid

from . import model as mdl
from ._io import fmt, fmt_row
from .grid import SpaceGrid, TimeGrid
from .hjb import DEFAULT_POLICY_SWEEPS, HJBSolution, solve_hjb
from .kfe import DistributionPath, dirac_init, transport
from .model import Aggregator, ModelSpec

log = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-9


class Scheme(str, enum.Enum):
    BANACH = "BANACH"
    FICTITIOUS = "FICTITIOUS"


@dataclass(frozen=True)
class Init:
    kind: str  # "envelope_min" | "envelope_max" | "constant"
    value: Optional[float] = None

    @classmethod
    def parse(cls, text: str) -> "Init":
        t = text.strip().lower()
        if t in ("envelope_min", "min"):
            return cls("envelope_min")
        if t in ("envelope_max", "max"):
            return cls("envelope_max")
        if t.startswith("const:") or t.startswith("constant:"):
            return cls("constant", float(t.split(":", 1)[1]))
        raise ValueError(f"unknown initialisation {text!r}")

    def __str__(self):
        return f"const:{fmt(self.value)}" if self.kind == "constant" else self.kind


ENVELOPE_MIN = Init("envelope_min")
ENVELOPE_MAX = Init("envelope_max")


def constant(value: float) -> Init:
    return Init("constant", float(value))


@dataclass(frozen=True)
class IterationConfig:
    """Outer-loop settings.

    ``fp_stop`` selects the fictitious-play stopping test: ``"residual"``
    stops on the best-response gap ``sup|nu^{n+1} - mhat^n| < epsilon``;
    ``"increment"`` stops on ``sup|mhat^{n+1} - mhat^n| < epsilon``.
    """

    epsilon: float = 1e-6
    max_iter: int = 500
    scheme: Scheme = Scheme.BANACH
    init: Init = ENVELOPE_MIN
    terminal_discounted: bool = False
    policy_sweeps: int = DEFAULT_POLICY_SWEEPS
    fp_stop: str = "residual"

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if isinstance(self.init, str):
            object.__setattr__(self, "init", Init.parse(self.init))
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.fp_stop not in ("residual", "increment"):
            raise ValueError("fp_stop must be 'residual' or 'increment'")


@dataclass
class BestResponse:
    m: np.ndarray
    hjb: HJBSolution
    dist: DistributionPath


@dataclass
class EquilibriumResult:
    m_star: np.ndarray
    iterations: int
    residual_history: List[float]
    monotone_flag: str
    converged: bool
    value_field: np.ndarray
    policy_field: np.ndarray
    distribution: np.ndarray
    grid: SpaceGrid = field(repr=False)
    tgrid: TimeGrid = field(repr=False)
    scheme: Scheme = Scheme.BANACH
    init: Init = ENVELOPE_MIN
    iterates: List[np.ndarray] = field(default_factory=list, repr=False)
    reward: float = float("nan")

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("inf")


class NonConvergedError(RuntimeError):
    def __init__(self, result: EquilibriumResult):
        super().__init__(
            f"no convergence after {result.iterations} iterations "
            f"(last residual {result.residual:.3e})"
        )
        self.result = result


def best_response(
    spec: ModelSpec,
    grid: SpaceGrid,
    tgrid: TimeGrid,
    m,
    terminal_discounted: bool = False,
    policy_sweeps: int = DEFAULT_POLICY_SWEEPS,
    g0: Optional[np.ndarray] = None,
) -> BestResponse:
    """HJB solve for ``m``, forward transport, then aggregate per time node."""
    sol = solve_hjb(spec, grid, tgrid, m, terminal_discounted, policy_sweeps)
    if g0 is None:
        g0 = dirac_init(grid, spec.x0)
    dist = transport(spec, grid, tgrid, sol.policy, g0)
    return BestResponse(m=dist.aggregates(spec, grid), hjb=sol, dist=dist)


def envelope_paths(spec: ModelSpec, grid: SpaceGrid, tgrid: TimeGrid, g0=None):
    """Aggregates under the constant controls ``0`` and ``a_max``."""
    if g0 is None:
        g0 = dirac_init(grid, spec.x0)
    lo = transport(spec, grid, tgrid, np.zeros(grid.n), g0)
    hi = transport(spec, grid, tgrid, np.full(grid.n, spec.a_max), g0)
    return lo.aggregates(spec, grid), hi.aggregates(spec, grid)


def initial_path(spec, grid, tgrid, init: Init) -> np.ndarray:
    if init.kind == "constant":
        if spec.kind.isoelastic and not init.value > 0:
            raise ValueError("constant initialisation must be positive for isoelastic models")
        return np.full(len(tgrid), float(init.value))
    m_min, m_max = envelope_paths(spec, grid, tgrid)
    return m_min if init.kind == "envelope_min" else m_max


def monotone_flag(iterates, slack: float = MONOTONE_SLACK) -> str:
    """'nondecreasing', 'nonincreasing', 'constant' or 'mixed'."""
    if len(iterates) < 2:
        return "constant"
    inc = np.diff(np.asarray(iterates), axis=0)
    up = bool(np.all(inc >= -slack))
    down = bool(np.all(inc <= slack))
    if up and down:
        return "constant"
    if up:
        return "nondecreasing"
    if down:
        return "nonincreasing"
    return "mixed"


def _finish(spec, grid, tgrid, cfg, br, history, iterates, converged, n):
    res = EquilibriumResult(
        m_star=br.m,
        iterations=n,
        residual_history=history,
        monotone_flag=monotone_flag(iterates),
        converged=converged,
        value_field=br.hjb.values,
        policy_field=br.hjb.policy,
        distribution=br.dist.mass,
        grid=grid,
        tgrid=tgrid,
        scheme=cfg.scheme,
        init=cfg.init,
        iterates=iterates,
    )
    res.reward = equilibrium_reward(spec, res)
    if not converged:
        raise NonConvergedError(res)
    return res


def banach_iterate(spec, grid, tgrid, cfg: IterationConfig = IterationConfig()) -> EquilibriumResult:
    """``m^{n+1} = Lambda(m^n)`` until ``sup_t |m^{n+1} - m^n| < epsilon``.

    The returned ``m_star`` is the last best response, i.e. exactly the
    aggregate of the returned distribution.  ``iterates`` holds
    ``m^1, m^2, ...`` and ``monotone_flag`` classifies their ordering.
    Raises :class:`NonConvergedError` (carrying the partial result) after
    ``max_iter`` best responses.
    """
    m = initial_path(spec, grid, tgrid, cfg.init)
    iterates = [m]
    history: List[float] = []
    br = None
    for n in range(1, cfg.max_iter + 1):
        br = best_response(spec, grid, tgrid, m, cfg.terminal_discounted, cfg.policy_sweeps)
        res = float(np.max(np.abs(br.m - m)))
        history.append(res)
        iterates.append(br.m)
        log.debug("banach %d residual %.3e", n, res)
        if res < cfg.epsilon:
            return _finish(spec, grid, tgrid, cfg, br, history, iterates, True, n)
        m = br.m
    return _finish(spec, grid, tgrid, cfg, br, history, iterates, False, cfg.max_iter)


def fictitious_play(spec, grid, tgrid, cfg: IterationConfig) -> EquilibriumResult:
    """Best response against the running average of past responses.

    Under the geometric aggregator the average is taken over ``log m``.
    ``iterates`` holds the averages ``mhat^1, mhat^2, ...``.
    """
    geometric = spec.aggregator is Aggregator.GEOMETRIC
    to_z = np.log if geometric else (lambda v: np.asarray(v, dtype=float))
    from_z = np.exp if geometric else (lambda v: v)

    m_hat = initial_path(spec, grid, tgrid, cfg.init)
    z_hat = to_z(m_hat)
    iterates = [m_hat]
    history: List[float] = []
    br = None
    for n in range(1, cfg.max_iter + 1):
        br = best_response(spec, grid, tgrid, m_hat, cfg.terminal_discounted, cfg.policy_sweeps)
        z_hat = (n * z_hat + to_z(br.m)) / (n + 1)
        new_hat = from_z(z_hat)
        if cfg.fp_stop == "residual":
            res = float(np.max(np.abs(br.m - m_hat)))
        else:
            res = float(np.max(np.abs(new_hat - m_hat)))
        history.append(res)
        iterates.append(new_hat)
        if res < cfg.epsilon:
            return _finish(spec, grid, tgrid, cfg, br, history, iterates, True, n)
        m_hat = new_hat
    return _finish(spec, grid, tgrid, cfg, br, history, iterates, False, cfg.max_iter)


def solve_equilibrium(spec, grid, tgrid, cfg: IterationConfig) -> EquilibriumResult:
    if cfg.scheme is Scheme.BANACH:
        return banach_iterate(spec, grid, tgrid, cfg)
    return fictitious_play(spec, grid, tgrid, cfg)


def equilibrium_reward(spec: ModelSpec, result: EquilibriumResult) -> float:
    """Discounted expected profit along the equilibrium, trapezoid in time."""
    x = result.grid.nodes
    t = result.tgrid.nodes
    m = result.m_star
    g = result.distribution
    flow = np.array([
        g[k] @ (np.asarray(mdl.revenue(spec, x, m[k])) - 0.5 * result.policy_field[k] ** 2)
        for k in range(t.size)
    ])
    disc = np.exp(-spec.rho * t)
    running = float(trapezoid(disc * flow, t))
    terminal = float(disc[-1] * (g[-1] @ np.asarray(mdl.revenue(spec, x, m[-1]))))
    return running + terminal


def mean_price(spec: ModelSpec, result: EquilibriumResult) -> np.ndarray:
    """Mass-weighted mean price per time node (LQ kind)."""
    x = result.grid.nodes
    return np.array([g @ np.asarray(mdl.price(spec, x, mk))
                     for g, mk in zip(result.distribution, result.m_star)])


def mean_log_price(spec: ModelSpec, result: EquilibriumResult) -> np.ndarray:
    x = result.grid.nodes
    return np.array([g @ np.log(np.asarray(mdl.price(spec, x, mk)))
                     for g, mk in zip(result.distribution, result.m_star)])


def price_statistic(spec: ModelSpec, result: EquilibriumResult) -> np.ndarray:
    return mean_log_price(spec, result) if spec.kind.isoelastic else mean_price(spec, result)


def write_equilibrium_csv(path, result: EquilibriumResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "m_star"])
        for t, m in zip(result.tgrid.nodes, result.m_star):
            w.writerow(fmt_row(t, m))


def read_equilibrium_csv(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1]


def manifest(spec: ModelSpec, result: EquilibriumResult, cfg: IterationConfig) -> dict:
    params = {k: getattr(spec, k) for k in
              ("rho", "D", "gamma", "zeta", "delta", "sigma", "xi", "a_max", "x0")}
    return {
        "kind": spec.kind.value,
        "aggregator": spec.aggregator.value,
        "parameters": params,
        "grid": {"x_min": result.grid.x_min, "x_max": result.grid.x_max,
                 "n_x": result.grid.n, "spacing": result.grid.spacing},
        "time": {"T": result.tgrid.horizon, "dt": result.tgrid.dt},
        "scheme": result.scheme.value,
        "init": str(result.init),
        "epsilon": cfg.epsilon,
        "max_iter": cfg.max_iter,
        "terminal_discounted": cfg.terminal_discounted,
        "policy_sweeps": cfg.policy_sweeps,
        "fp_stop": cfg.fp_stop,
        "converged": result.converged,
        "iterations": result.iterations,
        "residuals": result.residual_history,
        "monotone_flag": result.monotone_flag,
        "reward": result.reward,
    }


def write_manifest(path, spec, result, cfg) -> None:
    with open(path, "w") as fh:
        json.dump(manifest(spec, result, cfg), fh, indent=2)
        fh.write("\n")
