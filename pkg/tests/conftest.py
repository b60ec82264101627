import math

import numpy as np
import pytest

from mfg_solve import ModelSpec, build_linear_grid, build_log_grid, build_time_grid
from mfg_solve.fixedpoint import IterationConfig, banach_iterate, constant

PAPER_N = 501
PAPER_DT = 0.1


@pytest.fixture(scope="session")
def paper_grid():
    return build_log_grid(math.exp(-15), math.exp(15), PAPER_N)


@pytest.fixture(scope="session")
def paper_tgrid():
    return build_time_grid(1.0, PAPER_DT)


@pytest.fixture(scope="session")
def small_log_grid():
    return build_log_grid(math.exp(-8), math.exp(8), 161)


@pytest.fixture(scope="session")
def small_tgrid():
    return build_time_grid(1.0, 0.1)


@pytest.fixture(scope="session")
def lq_spec():
    return ModelSpec(kind="LQ_MEANREV", D=4.0, delta=0.5, sigma=0.5, xi=0.5, a_max=12.0, x0=1.0)


@pytest.fixture(scope="session")
def lq_grid():
    return build_linear_grid(-4.0, 8.0, 241)


@pytest.fixture(scope="session")
def paper_equilibria(paper_grid, paper_tgrid):
    """Low and high equilibria of both isoelastic models at xi = 3.8."""
    out = {}
    for kind in ("LOG_MEANREV_ISOELASTIC", "GEOMETRIC_ISOELASTIC"):
        spec = ModelSpec(kind=kind)
        for side, start in (("low", paper_grid.x_min), ("high", paper_grid.x_max)):
            out[kind, side] = banach_iterate(
                spec, paper_grid, paper_tgrid, IterationConfig(init=constant(start)))
    return out


def sup(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
