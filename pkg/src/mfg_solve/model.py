"""Benchmark model families: dynamics, inverse demand, investment cost and
the aggregate statistic that couples the population."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .grid import SpaceGrid


class ModelKind(str, enum.Enum):
    LQ_MEANREV = "LQ_MEANREV"
    LOG_MEANREV_ISOELASTIC = "LOG_MEANREV_ISOELASTIC"
    GEOMETRIC_ISOELASTIC = "GEOMETRIC_ISOELASTIC"

    @property
    def isoelastic(self) -> bool:
        return self is not ModelKind.LQ_MEANREV


class Aggregator(str, enum.Enum):
    ARITHMETIC = "ARITHMETIC"
    GEOMETRIC = "GEOMETRIC"


@dataclass(frozen=True)
class ModelSpec:
    """One benchmark model.

    ``rho`` discount rate, ``D``/``gamma``/``zeta`` inverse-demand level,
    scale and own-quantity elasticity, ``delta`` mean reversion or
    depreciation, ``sigma`` volatility, ``xi`` interaction strength,
    ``a_max`` the investment cap and ``x0`` the common initial capacity.
    """

    kind: ModelKind = ModelKind.LOG_MEANREV_ISOELASTIC
    rho: float = 0.02
    D: float = 1.0
    gamma: float = 1.2
    zeta: float = 0.5
    delta: float = 3.0
    sigma: float = 1.0
    xi: float = 3.8
    a_max: float = 12.0
    x0: float = 1.0
    aggregator: Optional[Aggregator] = None
    # zero-revenue and degenerate cases are legal for testing; validate=False skips checks
    validate: bool = True

    def __post_init__(self):
        kind = ModelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        agg = self.aggregator
        if agg is None:
            agg = Aggregator.ARITHMETIC if kind is ModelKind.LQ_MEANREV else Aggregator.GEOMETRIC
        object.__setattr__(self, "aggregator", Aggregator(agg))
        for name in ("rho", "D", "gamma", "zeta", "delta", "sigma", "xi", "a_max", "x0"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.validate:
            self.check()

    def check(self) -> None:
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.a_max <= 0:
            raise ValueError("a_max must be positive")
        if self.D <= 0:
            raise ValueError("D must be positive")
        if self.xi < 0:
            raise ValueError("xi must be nonnegative")
        if self.kind.isoelastic:
            if self.gamma <= 0:
                raise ValueError("gamma must be positive")
            if not 0 < self.zeta < 1:
                raise ValueError("zeta must lie in (0, 1)")
            if self.x0 <= 0:
                raise ValueError("x0 must be positive for isoelastic models")
        elif self.aggregator is not Aggregator.ARITHMETIC:
            raise ValueError("LQ_MEANREV is only defined with the arithmetic aggregator")

    def with_(self, **changes) -> "ModelSpec":
        return replace(self, **changes)


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input")


def drift(spec: ModelSpec, x, a):
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    _finite(x, a)
    if spec.kind is ModelKind.LOG_MEANREV_ISOELASTIC:
        if np.any(x <= 0):
            raise ValueError("log mean reversion needs x > 0")
        out = a - spec.delta * x * np.log(x)
    else:
        out = a - spec.delta * x
    return out[()] if out.ndim == 0 else out


def diffusion(spec: ModelSpec, x):
    x = np.asarray(x, dtype=float)
    _finite(x)
    if spec.kind is ModelKind.LQ_MEANREV:
        out = np.full_like(x, spec.sigma)
    else:
        out = spec.sigma * x
    return out[()] if out.ndim == 0 else out


def price(spec: ModelSpec, x, m, xi: Optional[float] = None):
    """Inverse demand ``P(x, m; xi)``; ``xi`` defaults to the spec's value."""
    xi = spec.xi if xi is None else xi
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    _finite(x, m)
    if spec.kind is ModelKind.LQ_MEANREV:
        out = spec.D + xi * m - x
    else:
        if np.any(x <= 0) or np.any(m <= 0):
            raise ValueError("isoelastic price needs x > 0 and m > 0")
        out = spec.D * np.exp(xi * np.log(spec.gamma * m) - spec.zeta * np.log(x))
    return out[()] if out.ndim == 0 else out


def revenue(spec: ModelSpec, x, m, xi: Optional[float] = None):
    """``x * P(x, m; xi)``, the running and terminal reward."""
    xi = spec.xi if xi is None else xi
    x = np.asarray(x, dtype=float)
    m = np.asarray(m, dtype=float)
    if spec.kind is ModelKind.LQ_MEANREV:
        out = x * price(spec, x, m, xi)
    else:
        if np.any(x <= 0) or np.any(m <= 0):
            raise ValueError("isoelastic revenue needs x > 0 and m > 0")
        out = spec.D * np.exp(xi * np.log(spec.gamma * m) + (1.0 - spec.zeta) * np.log(x))
    return out[()] if np.ndim(out) == 0 else out


def cost(spec: ModelSpec, a):
    a = np.asarray(a, dtype=float)
    _finite(a)
    if np.any(a < 0) or np.any(a > spec.a_max):
        raise ValueError(f"control outside [0, {spec.a_max}]")
    out = 0.5 * a * a
    return out[()] if out.ndim == 0 else out


def aggregate(spec: ModelSpec, mass, grid: SpaceGrid) -> float:
    """Mean (arithmetic) or exp-mean-log (geometric) of the discrete law."""
    mass = np.asarray(mass, dtype=float)
    if mass.shape != grid.nodes.shape:
        raise ValueError("mass vector does not match the grid")
    if np.any(mass < 0) or abs(mass.sum() - 1.0) > 1e-10:
        raise ValueError("mass must be a nonnegative vector summing to 1")
    return aggregate_unchecked(spec.aggregator, mass, grid)


def aggregate_unchecked(aggregator: Aggregator, mass: np.ndarray, grid: SpaceGrid) -> float:
    if aggregator is Aggregator.ARITHMETIC:
        return float(grid.nodes @ mass)
    return float(np.exp(np.log(grid.nodes) @ mass))


# -- structural assumptions ---------------------------------------------------

@dataclass
class ConditionReport:
    name: str
    sign: str  # ">=0" or "<=0"
    min_value: float
    max_value: float
    holds: bool
    first_violation: Optional[tuple] = None


@dataclass
class AssumptionReport:
    concavity: ConditionReport
    supermodular_m: ConditionReport
    supermodular_xi: ConditionReport

    @property
    def conditions(self):
        return [self.concavity, self.supermodular_m, self.supermodular_xi]

    @property
    def structural_ok(self) -> bool:
        """Concavity in x and increasing differences in (x, m)."""
        return self.concavity.holds and self.supermodular_m.holds

    @property
    def all_ok(self) -> bool:
        return all(c.holds for c in self.conditions)


def _lattice(lo, hi, n, positive):
    if positive:
        return np.exp(np.linspace(math.log(lo), math.log(hi), n))
    return np.linspace(lo, hi, n)


def verify_assumptions(
    spec: ModelSpec,
    grid: Optional[SpaceGrid] = None,
    m_range=(0.1, 10.0),
    xi_range=None,
    x_range=None,
    samples: int = 25,
    rel_step: float = 1e-5,
    tol: float = 1e-8,
) -> AssumptionReport:
    """Check the sign conditions on ``xP`` by central differences.

    Condition (iv) is ``d2/dx2 (xP) <= 0``, condition (v) is
    ``d2/dxdm (xP) >= 0`` and the strength condition is
    ``d2/dxdxi (xP) >= 0``.  Every point of an ``x * m * xi`` lattice is
    checked; violations are reported, never raised.
    """
    if x_range is None:
        x_range = (grid.x_min, grid.x_max) if grid is not None else (0.1, 10.0)
    if xi_range is None:
        xi_range = (spec.xi, spec.xi)
    pos = spec.kind.isoelastic
    if pos and (x_range[0] <= 0 or m_range[0] <= 0):
        raise ValueError("isoelastic kinds need positive x and m ranges")
    xs = _lattice(x_range[0], x_range[1], samples, pos)
    ms = _lattice(m_range[0], m_range[1], samples, pos)
    xis = np.linspace(xi_range[0], xi_range[1], 1 if xi_range[0] == xi_range[1] else 7)
    X, M, XI = np.meshgrid(xs, ms, xis, indexing="ij")

    hx = rel_step * np.maximum(np.abs(X), 1.0) if not pos else rel_step * X
    hm = rel_step * np.maximum(np.abs(M), 1.0) if not pos else rel_step * M
    hxi = rel_step * np.maximum(np.abs(XI), 1.0)

    def f(x, m, xi):
        return revenue(spec, x, m, xi)

    eps = np.finfo(float).eps
    f0 = f(X, M, XI)

    fxp, fxm = f(X + hx, M, XI), f(X - hx, M, XI)
    dxx = (fxp - 2 * f0 + fxm) / hx**2
    noise_xx = 64 * eps * np.maximum.reduce([abs(fxp), abs(f0), abs(fxm)]) / hx**2

    def mixed(h2, shift):
        fpp = f(X + hx, *shift(+h2))
        fpm = f(X + hx, *shift(-h2))
        fmp = f(X - hx, *shift(+h2))
        fmm = f(X - hx, *shift(-h2))
        val = (fpp - fpm - fmp + fmm) / (4 * hx * h2)
        noise = 64 * eps * np.maximum.reduce([abs(fpp), abs(fpm), abs(fmp), abs(fmm)]) / (hx * h2)
        return val, noise

    dxm, noise_xm = mixed(hm, lambda h: (M + h, XI))
    dxxi, noise_xxi = mixed(hxi, lambda h: (M, XI + h))

    def report(name, vals, noise, sign):
        slack = tol + noise
        bad = vals > slack if sign == "<=0" else vals < -slack
        first = None
        if np.any(bad):
            i = tuple(np.argwhere(bad)[0])
            first = (float(X[i]), float(M[i]), float(XI[i]), float(vals[i]))
        return ConditionReport(
            name=name,
            sign=sign,
            min_value=float(vals.min()),
            max_value=float(vals.max()),
            holds=not bool(np.any(bad)),
            first_violation=first,
        )

    return AssumptionReport(
        concavity=report("concavity_x", dxx, noise_xx, "<=0"),
        supermodular_m=report("supermodular_xm", dxm, noise_xm, ">=0"),
        supermodular_xi=report("supermodular_xxi", dxxi, noise_xxi, ">=0"),
    )
