import math

import numpy as np
import pytest

from mfg_solve import ModelSpec, build_linear_grid, build_log_grid, build_time_grid
from mfg_solve.fixedpoint import IterationConfig, banach_iterate, best_response, constant
from mfg_solve.mc import (
    PathExplosionError,
    SimConfig,
    bias_tolerance,
    compare,
    coupled_paths,
    ordered_fraction,
    simulate_mean_path,
    simulate_paths,
    verify_equilibrium,
    verify_paths,
    write_mc_csv,
)


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(n_paths=0)
    with pytest.raises(ValueError):
        SimConfig(substeps=0)
    with pytest.raises(ValueError):
        SimConfig(seed=-1)


def test_zero_noise_geometric_decay():
    spec = ModelSpec(kind="GEOMETRIC_ISOELASTIC", sigma=0.0, validate=False)
    g = build_log_grid(math.exp(-8), math.exp(8), 101)
    tg = build_time_grid(1.0, 0.1)
    est = simulate_mean_path(spec, g, tg, np.zeros(g.n), SimConfig(n_paths=10, substeps=100))
    np.testing.assert_array_equal(est.se, 0.0)
    h = 0.1 / 100
    np.testing.assert_allclose(est.mean, (1 - spec.delta * h) ** (100 * np.arange(11)), rtol=1e-12)
    np.testing.assert_allclose(est.mean, np.exp(-spec.delta * tg.nodes), rtol=5e-3)


def test_seed_determinism_and_threads(small_log_grid, small_tgrid):
    spec = ModelSpec()
    pol = np.full(small_log_grid.n, 2.0)
    cfg = SimConfig(n_paths=20_000, seed=7, substeps=5)
    a = simulate_mean_path(spec, small_log_grid, small_tgrid, pol, cfg)
    b = simulate_mean_path(spec, small_log_grid, small_tgrid, pol, cfg, threads=3)
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.se, b.se)
    c = simulate_mean_path(spec, small_log_grid, small_tgrid, pol, SimConfig(20_000, 8, 5))
    assert not np.array_equal(a.mean, c.mean)


def test_single_path_reproducible(small_log_grid, small_tgrid):
    spec = ModelSpec()
    pol = np.zeros(small_log_grid.n)
    p1 = simulate_paths(spec, small_log_grid, small_tgrid, pol, SimConfig(1, 42, 10))
    p2 = simulate_paths(spec, small_log_grid, small_tgrid, pol, SimConfig(1, 42, 10))
    assert p1.shape == (11, 1)
    np.testing.assert_array_equal(p1, p2)


def test_se_scaling(small_log_grid, small_tgrid):
    spec = ModelSpec()
    pol = np.full(small_log_grid.n, 1.0)
    a = simulate_mean_path(spec, small_log_grid, small_tgrid, pol, SimConfig(10_000, 3, 5))
    b = simulate_mean_path(spec, small_log_grid, small_tgrid, pol, SimConfig(40_000, 3, 5))
    ratio = b.se[1:] / a.se[1:]
    assert np.all(np.abs(ratio - 0.5) < 0.1)


def test_coupling_orders_paths(small_log_grid, small_tgrid):
    spec = ModelSpec()
    lo = best_response(spec, small_log_grid, small_tgrid, np.full(11, 0.8)).hjb.policy
    hi = best_response(spec, small_log_grid, small_tgrid, np.full(11, 1.5)).hjb.policy
    xa, xb = coupled_paths(spec, small_log_grid, small_tgrid, lo, hi, SimConfig(5000, 1, 10))
    assert xa.shape == (11, 5000)
    assert ordered_fraction(xa, xb) >= 0.99


def test_path_explosion_detected(small_log_grid, small_tgrid):
    pol = np.full(small_log_grid.n, np.nan)
    with pytest.raises(PathExplosionError):
        simulate_mean_path(ModelSpec(), small_log_grid, small_tgrid, pol, SimConfig(10, 0, 1))


def test_compare_rules():
    v = compare([0, 1], [1.0, 2.0], [0.0, 0.1], [1.0, 2.25], 0.0)
    assert v.passed and v.worst_node == 1
    v = compare([0, 1], [1.0, 2.0], [0.0, 0.1], [1.0, 2.5], 0.0)
    assert not v.passed and v.worst_node == 1
    v = compare([0, 1], [1.0, 2.0], [0.0, 0.0], [1.01, 2.0], 0.05)
    assert v.passed and v.z_score[0] == math.inf


def test_zero_noise_degenerate_model_matches_exactly():
    # no revenue, no drift, no noise: the state never moves under either pipeline
    spec = ModelSpec(kind="LQ_MEANREV", D=0.0, xi=0.0, delta=0.0, sigma=0.0, validate=False)
    g = build_linear_grid(-2.0, 4.0, 61)
    tg = build_time_grid(1.0, 0.1)
    r = banach_iterate(spec, g, tg)
    v = verify_equilibrium(spec, r, SimConfig(1000, 0, 10))
    assert v.passed
    np.testing.assert_array_equal(v.m_mc, r.m_star)


@pytest.fixture(scope="module")
def refined_high():
    """High equilibrium on a grid fine enough that the PDE bias is below 3%."""
    g = build_log_grid(math.exp(-15), math.exp(15), 2001)
    tg = build_time_grid(1.0, 0.02)
    spec = ModelSpec()
    return spec, banach_iterate(spec, g, tg, IterationConfig(init=constant(g.x_max)))


def test_mc_accepts_equilibrium_and_rejects_perturbation(refined_high):
    spec, r = refined_high
    cfg = SimConfig(100_000, 0, 10)
    good = verify_equilibrium(spec, r, cfg)
    assert good.passed
    assert bias_tolerance(r.grid, r.tgrid) < 0.05
    for factor in (1.1, 0.9):
        bad = verify_paths(spec, r.grid, r.tgrid, factor * r.m_star, r.policy_field, cfg)
        assert not bad.passed
        assert bad.worst_node > 0


def test_mc_csv(tmp_path):
    v = compare([0.0, 1.0], [1.0, 2.0], [0.0, 0.1], [1.0, 2.1], 0.0)
    write_mc_csv(tmp_path / "mc.csv", v)
    lines = (tmp_path / "mc.csv").read_text().splitlines()
    assert lines[0] == "t,m_mc,se,m_pde,z_score"
    assert len(lines) == 3
