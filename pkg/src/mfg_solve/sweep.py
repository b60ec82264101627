"""Comparative statics in the interaction strength xi.

For each xi the Banach iteration is started from the constant paths at the
two grid ends; the sup distance between the two limits measures whether
the game has one equilibrium or (at least) two.  Work items are independent
and merged in xi order, so reports do not depend on the worker count.
"""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ._io import fmt_row
from .fixedpoint import (
    IterationConfig,
    NonConvergedError,
    banach_iterate,
    constant,
    price_statistic,
)
from .grid import SpaceGrid, TimeGrid
from .model import ModelSpec
from .svg import Panel, Series, write_svg

log = logging.getLogger(__name__)

GAP_TOL = 0.1
CLASSIFY_TOL = 0.05
ORDER_SLACK = 1e-6
REWARD_RTOL = 1e-8


class AbsentMultiplicityError(ValueError):
    """Low and high starts reach the same equilibrium; there is no basin to split."""


def default_xi_list() -> np.ndarray:
    return np.round(np.linspace(0.0, 6.0, 31), 12)


def path_gap(spec: ModelSpec, a, b) -> float:
    """Sup distance, in logs for the isoelastic kinds."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if spec.kind.isoelastic:
        return float(np.max(np.abs(np.log(b) - np.log(a))))
    return float(np.max(np.abs(b - a)))


@dataclass
class PairResult:
    """Equilibria reached from the low and high constant starts at one xi."""

    xi: float
    m_low: Optional[np.ndarray] = None
    m_high: Optional[np.ndarray] = None
    J_low: float = math.nan
    J_high: float = math.nan
    price_low: Optional[np.ndarray] = None
    price_high: Optional[np.ndarray] = None
    flag_low: str = ""
    flag_high: str = ""
    iters_low: int = 0
    iters_high: int = 0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def _run(spec, grid, tgrid, cfg, start):
    try:
        return banach_iterate(spec, grid, tgrid, replace(cfg, init=constant(start)))
    except NonConvergedError as exc:
        return exc


def solve_pair(spec: ModelSpec, grid: SpaceGrid, tgrid: TimeGrid, xi: float,
               cfg: IterationConfig = IterationConfig()) -> PairResult:
    s = spec.with_(xi=float(xi))
    out = PairResult(xi=float(xi))
    errors = []
    for side, start in (("low", grid.x_min), ("high", grid.x_max)):
        r = _run(s, grid, tgrid, cfg, start)
        if isinstance(r, NonConvergedError):
            errors.append(f"{side}: {r}")
            r = r.result
        setattr(out, f"m_{side}", r.m_star)
        setattr(out, f"J_{side}", r.reward)
        setattr(out, f"price_{side}", price_statistic(s, r))
        setattr(out, f"flag_{side}", r.monotone_flag)
        setattr(out, f"iters_{side}", r.iterations)
    out.error = "; ".join(errors) or None
    return out


def _pair_job(args):
    return solve_pair(*args)


def _threshold_job(args):
    spec, grid, tgrid, xi, classify_tol, cfg, refs = args
    try:
        return basin_threshold(spec, grid, tgrid, xi, classify_tol, cfg, refs=refs)
    except AbsentMultiplicityError:
        return math.nan


def _pmap(fn, items, threads: int):
    items = list(items)
    if threads > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(items))) as ex:
            return list(ex.map(fn, items))
    return [fn(it) for it in items]


def _runs(mask: np.ndarray) -> List[Tuple[int, int]]:
    """Maximal runs of True as inclusive index pairs."""
    out, start = [], None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        if not v and start is not None:
            out.append((start, i - 1))
            start = None
    if start is not None:
        out.append((start, len(mask) - 1))
    return out


@dataclass
class MultiplicityReport:
    xi_values: np.ndarray
    gap: np.ndarray
    gap_tol: float
    region: Optional[Tuple[float, float]]
    pairs: List[PairResult] = field(repr=False)
    thresholds: Dict[float, float] = field(default_factory=dict)
    anomalies: List[str] = field(default_factory=list)

    @property
    def region_mask(self) -> np.ndarray:
        if self.region is None:
            return np.zeros(self.xi_values.size, dtype=bool)
        return (self.xi_values >= self.region[0]) & (self.xi_values <= self.region[1])

    @property
    def converged(self) -> bool:
        return all(p.ok for p in self.pairs)

    def threshold(self, xi: float) -> float:
        return self.thresholds.get(float(xi), math.nan)


def multiplicity_scan(
    spec: ModelSpec,
    grid: SpaceGrid,
    tgrid: TimeGrid,
    xi_list: Sequence[float],
    gap_tol: float = GAP_TOL,
    cfg: IterationConfig = IterationConfig(),
    threads: int = 1,
    thresholds: bool = False,
    classify_tol: float = CLASSIFY_TOL,
) -> MultiplicityReport:
    """Scan ``xi_list`` and return the multiplicity region.

    The region is the longest run of consecutive scanned xi with
    ``gap > gap_tol``.  Other runs, non-monotone iterate sequences and
    non-converged starts are listed in ``anomalies``.
    """
    xi = np.asarray(xi_list, dtype=float)
    if xi.size == 0:
        raise ValueError("xi_list is empty")
    if np.any(np.diff(xi) <= 0):
        raise ValueError("xi_list must be strictly increasing")
    pairs = _pmap(_pair_job, [(spec, grid, tgrid, float(v), cfg) for v in xi], threads)

    gap = np.array([path_gap(spec, p.m_low, p.m_high) if p.ok else math.nan for p in pairs])
    anomalies = []
    for p in pairs:
        if not p.ok:
            anomalies.append(f"xi={p.xi:g}: {p.error}")
        if p.flag_low not in ("nondecreasing", "constant"):
            anomalies.append(f"xi={p.xi:g}: low-start iterates {p.flag_low}")
        if p.flag_high not in ("nonincreasing", "constant"):
            anomalies.append(f"xi={p.xi:g}: high-start iterates {p.flag_high}")

    runs = _runs(gap > gap_tol)
    region = None
    if runs:
        i0, i1 = max(runs, key=lambda r: (r[1] - r[0], -r[0]))
        region = (float(xi[i0]), float(xi[i1]))
        for r in runs:
            if r != (i0, i1):
                anomalies.append(
                    f"isolated multiplicity run xi in [{xi[r[0]]:g}, {xi[r[1]]:g}] "
                    "outside the main region"
                )
    report = MultiplicityReport(xi_values=xi, gap=gap, gap_tol=gap_tol, region=region,
                                pairs=pairs, anomalies=anomalies)
    if thresholds and region is not None:
        idx = np.flatnonzero(report.region_mask)
        jobs = [(spec, grid, tgrid, float(xi[i]), classify_tol, cfg,
                 (pairs[i].m_low, pairs[i].m_high)) for i in idx]
        vals = _pmap(_threshold_job, jobs, threads)
        report.thresholds = {float(xi[i]): v for i, v in zip(idx, vals)}
    return report


def classify(spec: ModelSpec, m, m_low, m_high) -> str:
    """'low' or 'high', whichever reference is nearer (ties go low)."""
    return "high" if path_gap(spec, m, m_high) < path_gap(spec, m, m_low) else "low"


def basin_threshold(
    spec: ModelSpec,
    grid: SpaceGrid,
    tgrid: TimeGrid,
    xi: float,
    classify_tol: float = CLASSIFY_TOL,
    cfg: IterationConfig = IterationConfig(),
    refs=None,
    gap_tol: float = GAP_TOL,
) -> float:
    """Critical ``log m1`` above which the constant start reaches the high equilibrium.

    Bisection on ``[log x_min, log x_max]``; ``refs`` may pass precomputed
    ``(m_low, m_high)`` for this xi.
    """
    if not grid.x_min > 0:
        raise ValueError("basin bisection works in log m1 and needs x_min > 0")
    s = spec.with_(xi=float(xi))
    if refs is None:
        p = solve_pair(spec, grid, tgrid, xi, cfg)
        refs = (p.m_low, p.m_high)
    m_low, m_high = refs
    if path_gap(s, m_low, m_high) <= gap_tol:
        raise AbsentMultiplicityError(f"a single equilibrium at xi={xi:g}")

    def probe(z):
        r = _run(s, grid, tgrid, cfg, math.exp(z))
        if isinstance(r, NonConvergedError):
            log.warning("basin probe at log m1=%.4f did not converge", z)
            r = r.result
        return classify(s, r.m_star, m_low, m_high)

    lo, hi = math.log(grid.x_min), math.log(grid.x_max)
    # the two ends are the references themselves
    if classify(s, m_low, m_low, m_high) == classify(s, m_high, m_low, m_high):
        raise AbsentMultiplicityError(f"both ends classify identically at xi={xi:g}")
    while hi - lo >= classify_tol:
        mid = 0.5 * (lo + hi)
        if probe(mid) == "high":
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class StaticsRow:
    xi: float
    m_low: np.ndarray
    m_high: np.ndarray
    J_low: float
    J_high: float
    price_low: np.ndarray
    price_high: np.ndarray
    in_region: bool
    low_ordered: Optional[bool]  # m_low(prev xi) <= m_low(xi); None on the first row
    high_ordered: Optional[bool]
    reward_ordered: Optional[bool]  # J_low <= J_high, checked inside the region
    price_ordered: Optional[bool]  # low <= high where the price result applies


def statics_table(
    spec: ModelSpec,
    grid: SpaceGrid,
    tgrid: TimeGrid,
    xi_list: Sequence[float],
    cfg: IterationConfig = IterationConfig(),
    threads: int = 1,
    report: Optional[MultiplicityReport] = None,
    slack: float = ORDER_SLACK,
) -> List[StaticsRow]:
    """Per-xi equilibria, rewards and prices with ordering verdicts."""
    if report is None:
        report = multiplicity_scan(spec, grid, tgrid, xi_list, cfg=cfg, threads=threads)
    mask = report.region_mask
    rows: List[StaticsRow] = []
    prev = None
    for p, inside in zip(report.pairs, mask):
        if not p.ok:
            prev = None
            continue
        price_applies = p.xi >= (spec.zeta if spec.kind.isoelastic else 1.0)
        rows.append(StaticsRow(
            xi=p.xi, m_low=p.m_low, m_high=p.m_high, J_low=p.J_low, J_high=p.J_high,
            price_low=p.price_low, price_high=p.price_high, in_region=bool(inside),
            low_ordered=None if prev is None else bool(np.all(prev.m_low <= p.m_low + slack)),
            high_ordered=None if prev is None else bool(np.all(prev.m_high <= p.m_high + slack)),
            reward_ordered=(bool(p.J_low <= p.J_high + REWARD_RTOL * abs(p.J_high))
                            if inside else None),
            price_ordered=(bool(np.all(p.price_low <= p.price_high + slack))
                           if price_applies else None),
        ))
        prev = p
    return rows


def write_report_csv(path, report: MultiplicityReport, tgrid: TimeGrid) -> None:
    K1 = len(tgrid)
    header = (["xi", "gap"] + [f"m_low(t_{k})" for k in range(K1)]
              + [f"m_high(t_{k})" for k in range(K1)] + ["J_low", "J_high", "threshold_log_m1"])
    nan_path = [math.nan] * K1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for p, g in zip(report.pairs, report.gap):
            low = p.m_low if p.ok else nan_path
            high = p.m_high if p.ok else nan_path
            w.writerow(fmt_row(p.xi, g, *low, *high, p.J_low, p.J_high, report.threshold(p.xi)))


def write_report_svg(path, report: MultiplicityReport) -> None:
    xi = report.xi_values
    gap_panel = Panel(
        title="Equilibrium gap", xlabel="xi", ylabel="sup gap",
        series=[Series("gap", xi, report.gap),
                Series("gap_tol", [xi[0], xi[-1]], [report.gap_tol] * 2)],
    )
    thr = [report.threshold(v) for v in xi]
    thr_panel = Panel(title="Basin threshold", xlabel="xi", ylabel="log m1",
                      series=[Series("threshold", xi, thr)])
    write_svg(path, [gap_panel, thr_panel])
