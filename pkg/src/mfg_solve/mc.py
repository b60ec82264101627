"""Monte-Carlo oracle: Euler-Maruyama paths under an exported policy field.

The PDE pipeline and the simulator share nothing but the model functions
and the policy lattice, so agreement between the two is an independent
check of the transport step.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import model as mdl
from ._io import fmt_row
from .grid import SpaceGrid, TimeGrid
from .model import Aggregator, ModelSpec

# paths per RNG stream; each chunk owns one child of the root SeedSequence
CHUNK = 8192
# bias_tol = BIAS_CONST * (dt + grid resolution), see the convergence study in the tests
BIAS_CONST = 0.75


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 100_000
    seed: int = 0
    substeps: int = 10

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


class PathExplosionError(FloatingPointError):
    pass


@dataclass
class MCEstimate:
    mean: np.ndarray  # aggregate per time node
    se: np.ndarray
    n_paths: int


def _chunks(n_paths: int):
    starts = range(0, n_paths, CHUNK)
    return [(i, s, min(CHUNK, n_paths - s)) for i, s in enumerate(starts)]


def _streams(seed: int, n_chunks: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_chunks)]


class _Stepper:
    """Euler-Maruyama under a piecewise-constant-in-time policy lattice."""

    def __init__(self, spec: ModelSpec, grid: SpaceGrid, tgrid: TimeGrid, policy, substeps: int):
        policy = np.asarray(policy, dtype=float)
        if policy.ndim == 1:
            policy = np.broadcast_to(policy, (len(tgrid), grid.n))
        if policy.shape[0] < tgrid.steps or policy.shape[1] != grid.n:
            raise ValueError("policy dimensions do not match the grids")
        self.spec = spec
        self.grid = grid
        self.tgrid = tgrid
        self.policy = policy
        self.substeps = substeps
        self.h = tgrid.dt / substeps

    def advance(self, x: np.ndarray, k: int, dW: np.ndarray) -> np.ndarray:
        """One PDE step ``[t_k, t_{k+1})``; ``dW`` has shape ``(substeps, n)``."""
        spec, nodes = self.spec, self.grid.nodes
        for j in range(self.substeps):
            a = np.interp(x, nodes, self.policy[k])
            if not np.all(np.isfinite(a)):
                raise PathExplosionError(f"non-finite control at step {k}, substep {j}")
            x = x + mdl.drift(spec, x, a) * self.h + mdl.diffusion(spec, x) * dW[j]
            if not np.all(np.isfinite(x)):
                bad = int(np.flatnonzero(~np.isfinite(x))[0])
                raise PathExplosionError(f"non-finite state at step {k}, substep {j}, path {bad}")
            x = np.clip(x, nodes[0], nodes[-1])
        return x

    def run(self, rng, n: int, keep_paths: bool = False):
        x = np.full(n, self.spec.x0)
        out = np.empty((len(self.tgrid), n)) if keep_paths else None
        stats = [self._moments(self._stat(x))]
        if keep_paths:
            out[0] = x
        sq = math.sqrt(self.h)
        for k in range(self.tgrid.steps):
            dW = rng.standard_normal((self.substeps, n)) * sq
            x = self.advance(x, k, dW)
            stats.append(self._moments(self._stat(x)))
            if keep_paths:
                out[k + 1] = x
        return n, stats, out

    @staticmethod
    def _moments(s):
        # centred on the first sample so identical samples give exactly zero spread
        d = s - s[0]
        dm = d.mean()
        return s[0] + dm, float(np.sum((d - dm) ** 2))

    def _stat(self, x):
        # log-state accumulation keeps the geometric statistic finite near e^15
        return np.log(x) if self.spec.aggregator is Aggregator.GEOMETRIC else x


def _combine(parts):
    """Chan's pairwise update, applied in chunk order."""
    n_tot = 0
    mean = None
    m2 = None
    for n, stats in parts:
        mu = np.array([s[0] for s in stats])
        sq = np.array([s[1] for s in stats])
        if mean is None:
            n_tot, mean, m2 = n, mu, sq
            continue
        d = mu - mean
        tot = n_tot + n
        mean = mean + d * n / tot
        m2 = m2 + sq + d * d * n_tot * n / tot
        n_tot = tot
    return n_tot, mean, m2


def simulate_mean_path(
    spec: ModelSpec,
    grid: SpaceGrid,
    tgrid: TimeGrid,
    policy,
    cfg: SimConfig = SimConfig(),
    threads: int = 1,
) -> MCEstimate:
    """Aggregate of simulated states per time node with standard errors.

    Geometric errors use the delta method, ``se(m) = m * se(mean log X)``.
    Results depend only on ``(seed, n_paths, substeps)``, not on ``threads``.
    """
    stepper = _Stepper(spec, grid, tgrid, policy, cfg.substeps)
    chunks = _chunks(cfg.n_paths)
    rngs = _streams(cfg.seed, len(chunks))

    def job(c):
        i, _, n = c
        n, stats, _ = stepper.run(rngs[i], n)
        return n, stats

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(job, chunks))
    else:
        parts = [job(c) for c in chunks]
    n, mean, m2 = _combine(parts)
    sd = np.sqrt(m2 / (n - 1)) if n > 1 else np.zeros_like(mean)
    se = sd / math.sqrt(n)
    if spec.aggregator is Aggregator.GEOMETRIC:
        level = np.exp(mean)
        return MCEstimate(mean=level, se=level * se, n_paths=n)
    return MCEstimate(mean=mean, se=se, n_paths=n)


def coupled_paths(spec, grid, tgrid, policy_a, policy_b, cfg: SimConfig):
    """Paths ``(K+1, n_paths)`` under two policies driven by the same increments."""
    sa = _Stepper(spec, grid, tgrid, policy_a, cfg.substeps)
    sb = _Stepper(spec, grid, tgrid, policy_b, cfg.substeps)
    chunks = _chunks(cfg.n_paths)
    xa_all = np.empty((len(tgrid), cfg.n_paths))
    xb_all = np.empty_like(xa_all)
    sq = math.sqrt(sa.h)
    for (_, start, n), rng in zip(chunks, _streams(cfg.seed, len(chunks))):
        cols = slice(start, start + n)
        xa = np.full(n, spec.x0)
        xb = xa.copy()
        xa_all[0, cols] = xa
        xb_all[0, cols] = xb
        for k in range(tgrid.steps):
            dW = rng.standard_normal((cfg.substeps, n)) * sq
            xa = sa.advance(xa, k, dW)
            xb = sb.advance(xb, k, dW)
            xa_all[k + 1, cols] = xa
            xb_all[k + 1, cols] = xb
    return xa_all, xb_all


def ordered_fraction(xa: np.ndarray, xb: np.ndarray, slack: float = 0.0) -> float:
    """Share of paths with ``xa <= xb + slack`` at every time node."""
    return float(np.mean(np.all(xa <= xb + slack, axis=0)))


@dataclass
class MCVerdict:
    passed: bool
    t: np.ndarray
    m_mc: np.ndarray
    se: np.ndarray
    m_pde: np.ndarray
    z_score: np.ndarray
    bias_tol: float
    worst_node: int

    @property
    def max_z(self) -> float:
        return float(np.max(self.z_score))


def bias_tolerance(grid: SpaceGrid, tgrid: TimeGrid, const: float = BIAS_CONST) -> float:
    return const * (tgrid.dt + grid.resolution)


def compare(t, m_mc, se, m_pde, bias_tol) -> MCVerdict:
    """Node-wise test ``|m_mc - m_pde| < max(3 se, bias_tol)``; exact matches always pass."""
    m_mc = np.asarray(m_mc, dtype=float)
    se = np.asarray(se, dtype=float)
    m_pde = np.asarray(m_pde, dtype=float)
    diff = np.abs(m_mc - m_pde)
    allowed = np.maximum(3.0 * se, bias_tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, diff / se, np.where(diff > 0, np.inf, 0.0))
        excess = np.where(allowed > 0, diff / allowed, np.where(diff > 0, np.inf, 0.0))
    ok = (diff < allowed) | (diff == 0)
    return MCVerdict(
        passed=bool(np.all(ok)),
        t=np.asarray(t), m_mc=m_mc, se=se, m_pde=m_pde,
        z_score=z, bias_tol=float(np.max(bias_tol)), worst_node=int(np.argmax(excess)),
    )


def verify_equilibrium(
    spec: ModelSpec,
    result,
    cfg: SimConfig = SimConfig(),
    bias_const: float = BIAS_CONST,
    threads: int = 1,
) -> MCVerdict:
    """Simulate under ``result.policy_field`` and compare with ``result.m_star``.

    PASS iff ``|m_mc - m*| < max(3 se, bias_tol)`` at every time node, with
    ``bias_tol = bias_const * (dt + resolution)`` scaled by ``m*`` under the
    geometric aggregator.
    """
    return verify_paths(spec, result.grid, result.tgrid, result.m_star, result.policy_field,
                        cfg, bias_const, threads)


def verify_paths(spec, grid, tgrid, m_star, policy, cfg: SimConfig = SimConfig(),
                 bias_const: float = BIAS_CONST, threads: int = 1) -> MCVerdict:
    """:func:`verify_equilibrium` on bare arrays, e.g. read back from CSV."""
    est = simulate_mean_path(spec, grid, tgrid, policy, cfg, threads)
    m_pde = np.asarray(m_star, dtype=float)
    tol = bias_tolerance(grid, tgrid, bias_const)
    if spec.aggregator is Aggregator.GEOMETRIC:
        tol_vec = tol * np.abs(m_pde)
    else:
        tol_vec = np.full_like(m_pde, tol)
    verdict = compare(tgrid.nodes, est.mean, est.se, m_pde, tol_vec)
    verdict.bias_tol = tol
    return verdict


def simulate_paths(spec, grid, tgrid, policy, cfg: SimConfig) -> np.ndarray:
    """All trajectories ``(K+1, n_paths)``; meant for small ``n_paths``."""
    stepper = _Stepper(spec, grid, tgrid, policy, cfg.substeps)
    chunks = _chunks(cfg.n_paths)
    out = [stepper.run(rng, n, keep_paths=True)[2]
           for (_, _, n), rng in zip(chunks, _streams(cfg.seed, len(chunks)))]
    return np.concatenate(out, axis=1)


def write_mc_csv(path, verdict: MCVerdict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "m_mc", "se", "m_pde", "z_score"])
        for row in zip(verdict.t, verdict.m_mc, verdict.se, verdict.m_pde, verdict.z_score):
            w.writerow(fmt_row(*row))
