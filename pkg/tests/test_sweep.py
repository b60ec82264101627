import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from mfg_solve import ModelSpec
from mfg_solve.sweep import (
    AbsentMultiplicityError,
    _runs,
    basin_threshold,
    classify,
    default_xi_list,
    multiplicity_scan,
    path_gap,
    statics_table,
    write_report_csv,
    write_report_svg,
)


def test_default_xi_list():
    xi = default_xi_list()
    assert xi.size == 31 and xi[0] == 0.0 and xi[-1] == 6.0
    assert 3.8 in xi


def test_runs():
    assert _runs(np.array([0, 1, 1, 0, 1], dtype=bool)) == [(1, 2), (4, 4)]
    assert _runs(np.zeros(3, dtype=bool)) == []
    assert _runs(np.ones(2, dtype=bool)) == [(0, 1)]


def test_path_gap_scales():
    assert path_gap(ModelSpec(), [1.0, 1.0], [1.0, math.e]) == pytest.approx(1.0)
    assert path_gap(ModelSpec(kind="LQ_MEANREV"), [1.0, 1.0], [1.0, 3.0]) == 2.0


def test_classify_nearest():
    spec = ModelSpec()
    assert classify(spec, [1.1, 1.1], [1.0, 1.0], [3.0, 3.0]) == "low"
    assert classify(spec, [2.9, 2.9], [1.0, 1.0], [3.0, 3.0]) == "high"


def test_xi_zero_only_gives_empty_region(paper_grid, paper_tgrid):
    rep = multiplicity_scan(ModelSpec(), paper_grid, paper_tgrid, [0.0])
    assert rep.region is None
    assert rep.gap[0] < 1e-5
    assert rep.anomalies == []


def test_scan_input_checks(paper_grid, paper_tgrid):
    with pytest.raises(ValueError):
        multiplicity_scan(ModelSpec(), paper_grid, paper_tgrid, [])
    with pytest.raises(ValueError):
        multiplicity_scan(ModelSpec(), paper_grid, paper_tgrid, [1.0, 0.5])


@pytest.fixture(scope="module")
def local_scan(paper_grid, paper_tgrid):
    return multiplicity_scan(ModelSpec(), paper_grid, paper_tgrid, [3.4, 3.6, 3.8, 4.0],
                             thresholds=True)


def test_local_scan_region(local_scan):
    assert local_scan.region is not None
    lo, hi = local_scan.region
    assert lo <= 3.8 <= hi
    assert local_scan.gap[2] > 0.1
    assert np.all(local_scan.gap >= 0)


def test_thresholds_inside_bounds(local_scan):
    thr = local_scan.threshold(3.8)
    assert -15 < thr < 15
    assert math.isnan(local_scan.threshold(3.4))


def test_basin_threshold_direct(paper_grid, paper_tgrid, local_scan):
    p = local_scan.pairs[2]
    t = basin_threshold(ModelSpec(), paper_grid, paper_tgrid, 3.8, classify_tol=0.5,
                        refs=(p.m_low, p.m_high))
    assert abs(t - local_scan.threshold(3.8)) < 0.5


def test_absent_multiplicity_below_region(paper_grid, paper_tgrid):
    with pytest.raises(AbsentMultiplicityError):
        basin_threshold(ModelSpec(), paper_grid, paper_tgrid, 2.0)


def test_statics_rows(paper_grid, paper_tgrid, local_scan):
    rows = statics_table(ModelSpec(), paper_grid, paper_tgrid, None, report=local_scan)
    assert [r.xi for r in rows] == [3.4, 3.6, 3.8, 4.0]
    assert rows[0].low_ordered is None
    assert all(r.low_ordered and r.high_ordered for r in rows[1:])
    assert all(r.price_ordered for r in rows)
    assert all(r.reward_ordered for r in rows if r.in_region)


def test_lq_statics_price_ordering(lq_grid, small_tgrid):
    spec = ModelSpec(kind="LQ_MEANREV", D=4.0, delta=0.5, sigma=0.5)
    rows = statics_table(spec, lq_grid, small_tgrid, [0.5, 1.0, 1.5])
    assert rows[0].price_ordered is None  # the ordering result needs xi >= 1
    assert rows[1].price_ordered and rows[2].price_ordered


def test_report_files(tmp_path, paper_tgrid, local_scan):
    write_report_csv(tmp_path / "r.csv", local_scan, paper_tgrid)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    head = lines[0].split(",")
    assert head[:3] == ["xi", "gap", "m_low(t_0)"]
    assert head[-3:] == ["J_low", "J_high", "threshold_log_m1"]
    assert len(head) == 2 + 2 * 11 + 3
    assert len(lines) == 5
    write_report_svg(tmp_path / "r.svg", local_scan)
    root = ET.parse(tmp_path / "r.svg").getroot()
    assert root.tag.endswith("svg")
    assert len(root.findall(".//{http://www.w3.org/2000/svg}polyline")) >= 2


def test_parallel_scan_is_bitwise_identical(paper_grid, paper_tgrid):
    xi = [3.6, 3.8]
    a = multiplicity_scan(ModelSpec(), paper_grid, paper_tgrid, xi, threads=1)
    b = multiplicity_scan(ModelSpec(), paper_grid, paper_tgrid, xi, threads=2)
    np.testing.assert_array_equal(a.gap, b.gap)
    for p, q in zip(a.pairs, b.pairs):
        np.testing.assert_array_equal(p.m_low, q.m_low)
        np.testing.assert_array_equal(p.m_high, q.m_high)
        assert p.J_high == q.J_high


def test_nonconvergence_is_recorded(paper_grid, paper_tgrid):
    from mfg_solve.fixedpoint import IterationConfig
    rep = multiplicity_scan(ModelSpec(), paper_grid, paper_tgrid, [0.0, 3.8],
                            cfg=IterationConfig(max_iter=5))
    assert not rep.converged
    assert math.isnan(rep.gap[1])
    assert rep.pairs[0].ok
    assert any("xi=3.8" in a for a in rep.anomalies)
