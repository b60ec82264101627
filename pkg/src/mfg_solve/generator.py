"""Upwind finite-difference generator on a non-uniform grid.

The same tridiagonal matrix ``A`` is used for the backward value update
``((1/dt + rho) I - A) V^k = f^k + V^{k+1}/dt`` and, transposed, for the
forward law update ``(I - dt A^T) g^{k+1} = g^k``.  Rows of ``A`` sum to zero
and off-diagonals are nonnegative, so both systems are M-matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded

from .grid import SpaceGrid


class NonMonotoneSchemeError(RuntimeError):
    pass


@dataclass
class Generator:
    lower: np.ndarray  # A[i, i-1], lower[0] == 0
    diag: np.ndarray
    upper: np.ndarray  # A[i, i+1], upper[-1] == 0

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[1:] += self.lower[1:] * v[:-1]
        out[:-1] += self.upper[:-1] * v[1:]
        return out

    def rmatvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.lower[1:] * v[1:]
        out[1:] += self.upper[:-1] * v[:-1]
        return out

    def to_sparse(self) -> sp.csr_matrix:
        return sp.diags(
            [self.lower[1:], self.diag, self.upper[:-1]], offsets=[-1, 0, 1], format="csr"
        )


def build_generator(grid: SpaceGrid, drift: np.ndarray, half_var: np.ndarray) -> Generator:
    """Assemble ``b d/dx + s d2/dx2`` with ``s = sigma(x)^2 / 2``.

    Drift is upwinded by its sign; diffusion uses the three-point stencil
    weighted by the forward and backward gaps.  At both ends the outward
    drift and the missing diffusion neighbour are dropped (reflecting state
    constraint), which keeps every row sum at zero.
    """
    dp = grid.spacing_fwd
    dm = grid.spacing_bwd
    up = np.maximum(drift, 0.0) / dp + 2.0 * half_var / (dp * (dp + dm))
    lo = np.maximum(-drift, 0.0) / dm + 2.0 * half_var / (dm * (dp + dm))
    lo[0] = 0.0
    up[-1] = 0.0
    return Generator(lower=lo, diag=-(lo + up), upper=up)


def _check_m_matrix(ab: np.ndarray, what: str) -> None:
    off_hi = ab[0, 1:]
    off_lo = ab[2, :-1]
    if np.any(off_hi > 0) or np.any(off_lo > 0):
        raise NonMonotoneSchemeError(f"{what}: positive off-diagonal entry")
    if np.any(ab[1] <= 0):
        raise NonMonotoneSchemeError(f"{what}: nonpositive diagonal")


def hjb_system(gen: Generator, dt: float, rho: float, check: bool = True) -> np.ndarray:
    """Banded form of ``(1/dt + rho) I - A``."""
    n = gen.n
    ab = np.zeros((3, n))
    ab[0, 1:] = -gen.upper[:-1]
    ab[1] = (1.0 / dt + rho) - gen.diag
    ab[2, :-1] = -gen.lower[1:]
    if check:
        _check_m_matrix(ab, "HJB system")
        rows = row_sums(ab)
        scale = 32 * np.finfo(float).eps * np.abs(ab).max()
        if np.any(rows < (1.0 / dt + rho) - scale):
            raise NonMonotoneSchemeError("HJB system: diagonal dominance lost")
    return ab


def kfe_system(gen: Generator, dt: float, check: bool = True) -> np.ndarray:
    """Banded form of ``I - dt A^T``."""
    n = gen.n
    ab = np.zeros((3, n))
    ab[0, 1:] = -dt * gen.lower[1:]
    ab[1] = 1.0 - dt * gen.diag
    ab[2, :-1] = -dt * gen.upper[:-1]
    if check:
        _check_m_matrix(ab, "KFE system")
    return ab


def row_sums(ab: np.ndarray) -> np.ndarray:
    out = ab[1].copy()
    out[:-1] += ab[0, 1:]
    out[1:] += ab[2, :-1]
    return out


def banded_to_dense(ab: np.ndarray) -> np.ndarray:
    n = ab.shape[1]
    out = np.diag(ab[1])
    out[np.arange(n - 1), np.arange(1, n)] = ab[0, 1:]
    out[np.arange(1, n), np.arange(n - 1)] = ab[2, :-1]
    return out


def solve_tridiagonal(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        x = solve_banded((1, 1), ab, rhs, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NonMonotoneSchemeError(f"tridiagonal solve failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite values in tridiagonal solve")
    return x
