import functools
import math

import numpy as np
import pytest
import sympy as sp

from esvortex import Grid, ModuliPoint, kw_data, newton_solve
from esvortex.vortex import build_vortex

# ---------------------------------------------------------------- oracles

RHO, T = sp.symbols("rho t", positive=True)


def sym_laplacian(expr):
    """Positive Laplacian of Sigma applied symbolically."""
    return sp.simplify(
        -(RHO + 1) ** 3 / (2 * RHO) * sp.diff(expr, T, 2)
        - 2 * RHO * (RHO + 1) * sp.diff(expr, RHO, 2)
        - 2 * sp.diff(expr, RHO)
    )


def lambdify_rho(expr):
    return sp.lambdify(RHO, expr, "numpy")


# ---------------------------------------------------------------- solves

DEFAULT_GRID = Grid(512, 32, 40.0)
SMALL_GRID = Grid(128, 16, 40.0)

CD = ModuliPoint.divisor_at(0, 1.0)


@functools.lru_cache(maxsize=None)
def solved(point: ModuliPoint, grid: Grid = DEFAULT_GRID):
    """(bg, report, vortex) for a point, cached across the session."""
    bg = kw_data(point, grid)
    report = newton_solve(bg)
    assert report.converged, (point.label(), report.final_residual_sup)
    return bg, report, build_vortex(bg, report)


@pytest.fixture(scope="session")
def cd():
    return solved(CD)


@pytest.fixture(scope="session")
def df_half():
    return solved(ModuliPoint.divisor_free(0.5))


@pytest.fixture(scope="session")
def cd_small():
    return solved(CD, SMALL_GRID)


def ln2():
    return math.log(2.0)


def rows_in(grid, lo, hi):
    return (grid.rho >= lo) & (grid.rho <= hi)


