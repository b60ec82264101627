import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mfg_solve.generator import (
    NonMonotoneSchemeError,
    banded_to_dense,
    build_generator,
    hjb_system,
    kfe_system,
    row_sums,
    solve_tridiagonal,
)
from mfg_solve.grid import SpaceGrid, build_log_grid

N = 40
finite = st.floats(-50, 50, allow_nan=False)


def random_grid(seed):
    rng = np.random.default_rng(seed)
    return SpaceGrid(np.cumsum(rng.uniform(0.05, 1.0, N)))


@settings(max_examples=60)
@given(arrays(float, N, elements=finite), arrays(float, N, elements=st.floats(0, 20)),
       st.integers(0, 2**32 - 1))
def test_generator_rows_and_signs(drift, half_var, seed):
    gen = build_generator(random_grid(seed), drift, half_var)
    dense = gen.to_sparse().toarray()
    off = dense - np.diag(np.diag(dense))
    assert np.all(off >= 0)
    np.testing.assert_allclose(dense.sum(axis=1), 0.0, atol=1e-12 * np.abs(dense).max() + 1e-300)
    assert gen.lower[0] == 0 and gen.upper[-1] == 0


@settings(max_examples=60)
@given(arrays(float, N, elements=finite), arrays(float, N, elements=st.floats(0, 20)),
       st.integers(0, 2**32 - 1), st.floats(1e-3, 1.0), st.floats(1e-3, 0.5))
def test_systems_are_m_matrices_and_adjoint(drift, half_var, seed, dt, rho):
    gen = build_generator(random_grid(seed), drift, half_var)
    A = gen.to_sparse().toarray()
    H = banded_to_dense(hjb_system(gen, dt, rho))
    F = banded_to_dense(kfe_system(gen, dt))
    np.testing.assert_allclose(H, (1 / dt + rho) * np.eye(N) - A, rtol=1e-14, atol=1e-14)
    np.testing.assert_allclose(F, np.eye(N) - dt * A.T, rtol=1e-14, atol=1e-14)
    # I - dt A^T is exactly the transpose of I - dt A
    np.testing.assert_array_equal(F.T, np.eye(N) - dt * A)
    rng = np.random.default_rng(seed)
    v, w = rng.standard_normal(N), rng.standard_normal(N)
    scale = np.abs(A).max() * np.abs(v).max() * np.abs(w).max() * N
    assert abs(w @ gen.matvec(v) - v @ gen.rmatvec(w)) <= 1e-12 * max(scale, 1.0)
    # column sums of I - dt A^T are one: mass is preserved by construction
    np.testing.assert_allclose(F.sum(axis=0), 1.0, atol=1e-12 * max(1.0, dt * np.abs(A).max()))


def test_row_sums_helper():
    gen = build_generator(build_log_grid(0.1, 10, 20), np.linspace(-1, 1, 20), np.ones(20))
    ab = hjb_system(gen, 0.1, 0.05)
    np.testing.assert_allclose(row_sums(ab), 10.05, rtol=1e-12)


def test_positive_off_diagonal_is_rejected():
    gen = build_generator(build_log_grid(0.1, 10, 5), np.zeros(5), np.ones(5))
    gen.upper[1] = -1.0  # breaks the sign pattern
    with pytest.raises(NonMonotoneSchemeError):
        hjb_system(gen, 0.1, 0.02)
    with pytest.raises(NonMonotoneSchemeError):
        kfe_system(gen, 0.1)


def test_singular_solve_raises():
    ab = np.zeros((3, 4))
    with pytest.raises((NonMonotoneSchemeError, FloatingPointError)):
        solve_tridiagonal(ab, np.ones(4))


def test_tridiagonal_solve_matches_dense():
    gen = build_generator(build_log_grid(0.1, 10, 30), np.linspace(-2, 2, 30), np.full(30, 0.3))
    ab = hjb_system(gen, 0.05, 0.02)
    rhs = np.linspace(0, 1, 30)
    np.testing.assert_allclose(solve_tridiagonal(ab, rhs), np.linalg.solve(banded_to_dense(ab), rhs),
                               rtol=1e-12)
