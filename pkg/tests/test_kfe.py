import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mfg_solve import ModelSpec, build_log_grid, build_time_grid
from mfg_solve.generator import NonMonotoneSchemeError, hjb_system, kfe_system, solve_tridiagonal
from mfg_solve.hjb import solve_hjb
from mfg_solve.kfe import closed_loop_generator, dirac_init, transport, write_mass_csv


def test_dirac_init():
    g = build_log_grid(0.25, 4.0, 5)  # 0.25, 0.5, 1, 2, 4
    np.testing.assert_array_equal(dirac_init(g, 1.0), [0, 0, 1, 0, 0])
    d = dirac_init(g, 1.5)
    np.testing.assert_allclose(d, [0, 0, 0.5, 0.5, 0])
    assert d @ g.nodes == pytest.approx(1.5)
    with pytest.raises(ValueError):
        dirac_init(g, 5.0)


def test_transport_conserves_mass(paper_grid, paper_tgrid):
    spec = ModelSpec()
    sol = solve_hjb(spec, paper_grid, paper_tgrid, np.ones(11))
    dist = transport(spec, paper_grid, paper_tgrid, sol.policy, dirac_init(paper_grid, 1.0))
    assert dist.max_mass_error < 1e-10
    assert dist.renormalized == 0
    assert np.all(dist.mass >= 0)
    np.testing.assert_allclose(dist.mass.sum(axis=1), 1.0, atol=1e-10)


def test_adjoint_pairing(paper_grid, paper_tgrid):
    """<g^{k+1}, V> = <g^k, (I - dt A)^{-1} V> to 1e-12 with the same A."""
    spec = ModelSpec()
    sol = solve_hjb(spec, paper_grid, paper_tgrid, np.ones(11))
    rng = np.random.default_rng(1)
    dt = paper_tgrid.dt
    for k in range(paper_tgrid.steps):
        gen = closed_loop_generator(spec, paper_grid, sol.policy[k])
        g_k = rng.dirichlet(np.ones(paper_grid.n))
        V = rng.standard_normal(paper_grid.n)
        g_next = solve_tridiagonal(kfe_system(gen, dt), g_k)
        ab = kfe_system(gen, dt)  # the transpose of I - dt A in banded form
        fwd = np.zeros_like(ab)
        fwd[0, 1:] = ab[2, :-1]
        fwd[1] = ab[1]
        fwd[2, :-1] = ab[0, 1:]
        W = solve_tridiagonal(fwd, V)
        assert abs(g_next @ V - g_k @ W) < 1e-12 * max(1.0, np.abs(V).max())


def test_hjb_and_kfe_share_the_matrix(paper_grid, paper_tgrid):
    spec = ModelSpec()
    sol = solve_hjb(spec, paper_grid, paper_tgrid, np.ones(11))
    for k in range(paper_tgrid.steps):
        gen = closed_loop_generator(spec, paper_grid, sol.policy[k])
        np.testing.assert_array_equal(gen.lower, sol.generators[k].lower)
        np.testing.assert_array_equal(gen.upper, sol.generators[k].upper)
        hjb_system(gen, paper_tgrid.dt, spec.rho)  # sign pattern check raises on failure


def test_zero_noise_geometric_envelope():
    spec = ModelSpec(kind="GEOMETRIC_ISOELASTIC", sigma=0.0, validate=False)
    g = build_log_grid(math.exp(-6), math.exp(3), 1801)
    tg = build_time_grid(1.0, 0.005)
    dist = transport(spec, g, tg, np.zeros(g.n), dirac_init(g, 1.0))
    m = dist.aggregates(spec, g)
    np.testing.assert_allclose(m, np.exp(-spec.delta * tg.nodes), rtol=0.02)


def test_policy_shape_and_initial_law_checked(small_log_grid, small_tgrid):
    spec = ModelSpec()
    g0 = dirac_init(small_log_grid, 1.0)
    with pytest.raises(ValueError):
        transport(spec, small_log_grid, small_tgrid, np.zeros((11, 3)), g0)
    with pytest.raises(ValueError):
        transport(spec, small_log_grid, small_tgrid, np.zeros(small_log_grid.n), g0 * 0.5)


def test_mass_csv_header(tmp_path, small_log_grid, small_tgrid):
    spec = ModelSpec()
    dist = transport(spec, small_log_grid, small_tgrid, np.zeros(small_log_grid.n),
                     dirac_init(small_log_grid, 1.0))
    write_mass_csv(tmp_path / "m.csv", small_log_grid, small_tgrid, dist)
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "t,x,mass"
    assert len(lines) == 1 + 11 * small_log_grid.n


@settings(max_examples=40, deadline=None)
@given(arrays(float, 161, elements=st.floats(0, 12)), st.sampled_from(
    ["LOG_MEANREV_ISOELASTIC", "GEOMETRIC_ISOELASTIC"]), st.floats(0.01, 0.5))
def test_random_policies_keep_a_probability_law(small_log_grid, policy, kind, dt):
    spec = ModelSpec(kind=kind)
    tg = build_time_grid(1.0, 1.0 / round(1.0 / dt))
    dist = transport(spec, small_log_grid, tg, policy, dirac_init(small_log_grid, 1.0))
    assert dist.max_mass_error < 1e-10
    assert np.all(dist.mass >= 0)
