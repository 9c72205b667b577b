import math

import numpy as np
import pytest
import sympy as sp

from esvortex import DiscreteField, Grid, ModuliPoint, kw_data
from esvortex.background import sample_background
from esvortex.kw_solver import SolverConfig, SolverReport, newton_solve
from esvortex.vortex import (
    NotConvergedError, build_vortex, degree, energy_integrand, reducible_vortex, taubes_check,
    vortex_residual, weitzenbock_residual, ymh_energy,
)

from conftest import CD, RHO, SMALL_GRID, lambdify_rho, rows_in, solved, sym_laplacian


def _cd_oracle():
    """Closed forms of the Charap-Duff observables from f = ln 2."""
    alpha = RHO + sp.log(RHO + 1)
    h = RHO * sp.exp(RHO) * sp.exp(-alpha) / 2
    f = sp.log(2)
    phi = sp.simplify(2 * h * sp.exp(2 * f))
    curv = sp.simplify(-sym_laplacian(alpha) / 2 + sym_laplacian(f))
    grad = sp.simplify(curv * phi - sym_laplacian(phi) / 2)
    return phi, curv, grad


def test_cd_oracle_closed_forms():
    phi, curv, grad = _cd_oracle()
    assert sp.simplify(phi - 4 * RHO / (RHO + 1)) == 0
    assert sp.simplify(curv - 2 / (RHO + 1)) == 0
    assert sp.simplify(grad - 4 / (RHO + 1) ** 2) == 0
    integrand = sp.simplify(curv**2 + grad + (4 - phi) ** 2 / 4)
    assert sp.simplify(integrand - 12 / (RHO + 1) ** 2) == 0
    assert sp.simplify(2 * curv - (4 - phi)) == 0
    assert sp.simplify(sym_laplacian(phi) - (16 * RHO - 8) / (RHO + 1) ** 2) == 0


def test_cd_fields_match_oracle(cd):
    _, _, v = cd
    phi, curv, grad = (lambdify_rho(e) for e in _cd_oracle())
    grid = v.grid
    rho = grid.rho2d
    inner = grid.interior_mask(1)
    np.testing.assert_allclose(v.phi_sq.values, phi(rho), atol=1e-8)
    np.testing.assert_allclose(v.curv.values[inner], curv(rho)[inner], atol=1e-8)
    # grad_phi_sq inherits the O(h^2) error of the discrete Delta(phi_sq)
    np.testing.assert_allclose(v.grad_phi_sq.values[inner], grad(rho)[inner], atol=4.0 * grid.h**2)


def test_cd_gradient_converges_at_second_order():
    errs = []
    for n in (128, 256, 512):
        grid = Grid(n, 16)
        _, _, v = solved(CD, grid)
        exact = 4.0 / (grid.rho2d + 1.0) ** 2
        errs.append(np.max(np.abs(v.grad_phi_sq.values - exact)[grid.interior_mask(1)]))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(abs(p - 2.0) < 0.1 for p in orders), (errs, orders)


def test_cd_vortex_residual(cd):
    assert vortex_residual(cd[2]) <= 1e-8


def test_converged_solve_vortex_residual():
    _, _, v = solved(ModuliPoint.divisor_at(2, 1.5))
    assert vortex_residual(v) <= 1e-8


def test_perturbation_is_detected(cd_small):
    bg, report, _ = cd_small
    bent = SolverReport(**{**report.__dict__, "f": DiscreteField(bg.grid, report.f.values + 0.1)})
    v = build_vortex(bg, bent)
    assert vortex_residual(v) > 0.1


def test_flat_background_with_vanishing_coefficients():
    grid = SMALL_GRID
    bg = sample_background(CD, grid, curvature=lambda r, t: 2.0 + 0.0 * r,
                           log_h_fn=lambda r, t: np.full(np.broadcast(r, t).shape, -1e4),
                           alpha=lambda r, t: 0.0 * r)
    zero = DiscreteField.constant(grid, 0.0)
    report = SolverReport(True, 0, 0.0, 0.0, 0.0, zero, np.zeros(grid.n_ext))
    assert np.all(bg.g.values == 0.0) and np.all(bg.h.values == 0.0)
    v = build_vortex(bg, report)
    assert np.all(v.phi_sq.values == 0.0)
    np.testing.assert_array_equal(v.curv.values, bg.bg_curvature.values)


def test_divisor_free_asymptotics(df_half):
    _, _, v = df_half
    grid = v.grid
    outer = rows_in(grid, 30, 38)
    assert np.max(v.phi_sq.values[outer]) < 1e-3
    assert np.max(np.abs(v.curv.values[outer] - 2.0)) < 1e-3
    assert np.all(v.ext_curv[-5:] == pytest.approx(2.0, abs=1e-6))


@pytest.mark.parametrize("point,expected", [
    (CD, 1.0),
    (ModuliPoint.divisor_free(0.5), 0.5),
    (ModuliPoint.divisor_at(1, 1.75), 1.75),
])
def test_degree_equals_energy(point, expected):
    _, _, v = solved(point)
    assert degree(v) == pytest.approx(expected, abs=1e-4)


@pytest.mark.parametrize("point,expected", [(CD, 4.0), (ModuliPoint.divisor_free(0.5), 2.0)])
def test_ymh_energy_is_four_times_degree(point, expected):
    _, _, v = solved(point)
    assert ymh_energy(v) == pytest.approx(expected, abs=1e-3)
    assert ymh_energy(v) == pytest.approx(4.0 * degree(v), rel=1e-3)


def test_cd_energy_integrand(cd):
    _, _, v = cd
    grid = v.grid
    inner = grid.interior_mask(1)
    exact = 12.0 / (grid.rho2d + 1.0) ** 2
    np.testing.assert_allclose(energy_integrand(v)[inner], exact[inner], atol=4.0 * grid.h**2)


def test_reducible_saturates_energy_bound():
    # tau^2 Vol / (4 pi) = 16 * 2 pi / (4 pi)
    v = reducible_vortex(SMALL_GRID)
    assert ymh_energy(v) == pytest.approx(8.0, abs=1e-12)
    assert degree(v) == pytest.approx(2.0, abs=1e-12)


def test_taubes_bound(cd):
    _, _, v = cd
    sup = taubes_check(v)
    grid = v.grid
    assert sup < 4.0
    assert sup == pytest.approx(4.0 * grid.rho[-1] / (grid.rho[-1] + 1.0), rel=1e-8)
    assert sup <= 4.0 + 10.0 * grid.h**2


@pytest.mark.parametrize("point", [ModuliPoint.divisor_free(1.25), ModuliPoint.divisor_at(2 + 1j, 1.0)])
def test_taubes_on_default_grid(point):
    assert taubes_check(solved(point)[2]) <= 4.004


def test_taubes_shrinks_toward_bradlow_edge():
    sups = [taubes_check(solved(ModuliPoint.divisor_free(e), SMALL_GRID)[2]) for e in (1.0, 1.5, 1.9)]
    assert sups[0] > sups[1] > sups[2]


def test_weitzenbock_cd_identity(cd):
    assert weitzenbock_residual(cd[2]) <= 1e-6


def test_weitzenbock_converged_solve():
    assert weitzenbock_residual(solved(ModuliPoint.divisor_at(0, 1.25))[2]) <= 1e-6


def test_weitzenbock_flags_garbage():
    bg = kw_data(ModuliPoint.divisor_free(1.0), SMALL_GRID)
    rng = np.random.default_rng(3)
    noise = DiscreteField(SMALL_GRID, 0.5 * rng.standard_normal(SMALL_GRID.shape))
    report = SolverReport(True, 0, 0.0, 0.0, 0.0, noise, np.zeros(SMALL_GRID.n_ext))
    assert weitzenbock_residual(build_vortex(bg, report)) > 0.1


def test_not_converged_report_rejected():
    bg = kw_data(ModuliPoint.divisor_free(1.5), SMALL_GRID)
    report = newton_solve(bg, SolverConfig(max_newton_iters=1, monotone_fallback=False))
    with pytest.raises(NotConvergedError):
        build_vortex(bg, report)


def test_direct_gradient_cross_check(cd):
    bg, report, _ = cd
    v = build_vortex(bg, report, direct_gradient=True)
    grid = v.grid
    sel = rows_in(grid, 0.5, 20.0)
    exact = 4.0 / (grid.rho2d + 1.0) ** 2
    err = np.max(np.abs(v.grad_phi_sq.values[sel] - exact[sel]))
    assert err < 50.0 * grid.h**2
    assert math.isfinite(err)
