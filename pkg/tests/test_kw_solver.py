import math

import numpy as np
import sympy
import pytest
from hypothesis import given, settings, strategies as st

from esvortex import DiscreteField, Grid, ModuliPoint, kw_data
from esvortex.background import BradlowError, gauge_shifted
from esvortex.geometry import TWO_PI
from esvortex.kw_solver import (
    ConvergenceError, SolverConfig, apply_laplacian, continuation_solve, default_supersolution,
    is_supersolution, monotone_solve, newton_solve, residual, solve,
)

from conftest import CD, DEFAULT_GRID, RHO, SMALL_GRID, lambdify_rho, solved, sym_laplacian


def test_apply_laplacian_neumann_examples():
    grid = Grid(256, 16)
    const = apply_laplacian(DiscreteField.constant(grid, 2.0))
    assert np.max(np.abs(const.values)) < 1e-9
    lin = apply_laplacian(DiscreteField.from_function(grid, lambda r, t: r))
    # Neumann closure only disturbs the outermost ring
    assert np.max(np.abs(lin.values[:-1] + 2.0)) < 1e-8


def test_apply_laplacian_rho_squared_oracle():
    grid = Grid(256, 8)
    exact = lambdify_rho(sym_laplacian(RHO**2))(grid.rho)
    out = apply_laplacian(DiscreteField.from_function(grid, lambda r, t: r**2))
    inner = grid.rho < 30
    err = np.abs(out.values[inner, 0] - exact[inner])
    assert np.all(err <= 2.0 * grid.h**2 * (grid.rho[inner] + 1.0))


def test_charap_duff_solution_is_ln2(cd):
    _, report, _ = cd
    assert report.converged
    assert np.max(np.abs(report.f.values - math.log(2.0))) <= 1e-6
    assert report.final_residual_sup <= 1e-10


def test_exact_init_takes_no_steps(cd):
    bg, report, _ = cd
    again = newton_solve(bg, init=report)
    assert again.converged and again.iterations == 0


def test_divisor_free_bounded_with_zero_integral(df_half):
    _, report, _ = df_half
    assert np.max(np.abs(report.f.values)) < 10.0
    assert abs(report.integral_laplacian) <= 1e-6 * TWO_PI


def test_residual_of_zero_field():
    bg = kw_data(ModuliPoint.divisor_at(1 + 1j, 1.25), SMALL_GRID)
    _, _, field = residual(bg, DiscreteField.constant(SMALL_GRID, 0.0))
    # the solver continues f past rho_max, which only touches the outer ring
    np.testing.assert_allclose(field.values[:-1], -(bg.g.values - bg.h.values)[:-1], atol=1e-12)


def test_residual_of_ln2_on_charap_duff():
    bg = kw_data(CD, SMALL_GRID)
    sup, l2, _ = residual(bg, DiscreteField.constant(SMALL_GRID, math.log(2.0)))
    assert sup < 1e-9 and l2 < 1e-9


def test_injected_solution_residual_is_second_order():
    beta = RHO * sympy.exp(-RHO)
    b, lb = lambdify_rho(beta), lambdify_rho(sym_laplacian(beta))
    sups = []
    for n in (128, 256, 512):
        grid = Grid(n, 16)
        bg = gauge_shifted(CD, grid, b, lb)
        f = DiscreteField(grid, math.log(2.0) + 0.5 * b(grid.rho2d))
        sups.append(residual(bg, f)[0])
    orders = [math.log2(sups[i] / sups[i + 1]) for i in range(2)]
    assert all(abs(p - 2.0) <= 0.2 for p in orders), (sups, orders)


def test_near_bradlow_edge():
    bg = kw_data(ModuliPoint.divisor_free(1.9), DEFAULT_GRID)
    report = newton_solve(bg)
    assert report.converged and report.final_residual_sup <= 1e-10


def test_energy_continuation_to_edge():
    pts = [ModuliPoint.divisor_free(round(1.0 + 0.1 * k, 10)) for k in range(10)]
    reports = continuation_solve(pts, DEFAULT_GRID)
    assert all(r.converged for r in reports)
    assert max(r.iterations for r in reports) <= 8


def test_divisor_continuation_along_real_axis():
    pts = [ModuliPoint.divisor_at(float(z), 1.0) for z in range(9)]
    reports = continuation_solve(pts, SMALL_GRID)
    assert all(r.converged for r in reports)


def test_single_point_continuation_matches_newton():
    p = ModuliPoint.divisor_free(0.75)
    (rep,) = continuation_solve([p], SMALL_GRID)
    direct = newton_solve(kw_data(p, SMALL_GRID))
    np.testing.assert_array_equal(rep.f.values, direct.f.values)


def test_continuation_rejects_mixed_families():
    with pytest.raises(ValueError):
        continuation_solve([ModuliPoint.divisor_free(1.0), ModuliPoint.divisor_at(0, 1.0)],
                           SMALL_GRID)


def test_continuation_reports_failing_index():
    cfg = SolverConfig(max_newton_iters=1, monotone_fallback=False)
    with pytest.raises(ConvergenceError, match="step 0"):
        continuation_solve([ModuliPoint.divisor_free(1.5)], SMALL_GRID, cfg)


def test_bradlow_refusal():
    bg = kw_data(ModuliPoint.divisor_free(1.0), SMALL_GRID)
    forged = bg.__class__(**{**bg.__dict__, "point": ModuliPoint(bg.point.family, 2.0)})
    with pytest.raises(BradlowError):
        newton_solve(forged)


def test_budget_exhaustion_is_reported():
    bg = kw_data(ModuliPoint.divisor_free(1.5), SMALL_GRID)
    report = newton_solve(bg, SolverConfig(max_newton_iters=1, monotone_fallback=False))
    assert not report.converged
    assert report.final_residual_sup > 1e-10


def test_uniqueness_from_two_initialisations():
    for p in (CD, ModuliPoint.divisor_free(0.5), ModuliPoint.divisor_at(2 + 1j, 1.5)):
        bg = kw_data(p, SMALL_GRID)
        a = newton_solve(bg)
        b = newton_solve(bg, init=DiscreteField.constant(SMALL_GRID, 1.0))
        assert np.max(np.abs(a.f.values - b.f.values)) <= 1e-8


def test_monotone_charap_duff_from_two():
    bg = kw_data(CD, DEFAULT_GRID)
    report = monotone_solve(bg, None, DiscreteField.constant(DEFAULT_GRID, 2.0))
    assert report.converged
    assert np.max(np.abs(report.f.values - math.log(2.0))) <= 1e-6
    # iterates never rise above rounding level
    assert report.max_increase <= 1e-12


def test_monotone_large_constant_matches_newton():
    p = ModuliPoint.divisor_free(1.0)
    bg = kw_data(p, SMALL_GRID)
    c = 30.0
    assert np.all(bg.g.values - bg.h.values * math.exp(2 * c) < 0)
    sup = DiscreteField.constant(SMALL_GRID, c)
    assert is_supersolution(bg, sup)
    mono = monotone_solve(bg, None, sup)
    newt = newton_solve(bg)
    assert np.max(np.abs(mono.f.values - newt.f.values)) <= 1e-8


def test_monotone_from_exact_solution_is_stationary(cd_small):
    bg, report, _ = cd_small
    again = monotone_solve(bg, None, report.f)
    assert np.max(np.abs(again.f.values - report.f.values)) < 1e-12


def test_monotone_rejects_non_supersolution():
    bg = kw_data(CD, SMALL_GRID)
    with pytest.raises(ValueError, match="supersolution"):
        monotone_solve(bg, None, DiscreteField.constant(SMALL_GRID, -3.0))


def test_default_supersolution():
    assert default_supersolution(kw_data(ModuliPoint.divisor_free(0.5), SMALL_GRID)) is not None


@settings(max_examples=20, deadline=None)
@given(st.floats(-1.0, 2.0, exclude_min=True, exclude_max=True))
def test_solver_config_validates_damping(d):
    if 0.0 < d < 1.0:
        assert SolverConfig(damping=d).damping == d
    else:
        with pytest.raises(ValueError):
            SolverConfig(damping=d)


def test_solver_config_validates_tolerances():
    with pytest.raises(ValueError):
        SolverConfig(residual_tol=0.0)
    with pytest.raises(ValueError):
        SolverConfig(linear_solver="gmres")


def test_direct_linear_solver_agrees():
    p = ModuliPoint.divisor_at(1j, 1.25)
    a = solve(p, SMALL_GRID)[1]
    b = solve(p, SMALL_GRID, SolverConfig(linear_solver="direct"))[1]
    assert np.max(np.abs(a.f.values - b.f.values)) < 1e-9


@pytest.mark.parametrize("point", [
    ModuliPoint.divisor_free(0.25), ModuliPoint.divisor_free(1.75),
    ModuliPoint.divisor_at(0, 1.75), ModuliPoint.divisor_at(2 + 1j, 1.0),
])
def test_standard_points_bounded_and_degree_preserving(point):
    _, report, _ = solved(point)
    assert np.max(np.abs(report.f.values)) <= 10.0
    assert abs(report.integral_laplacian) <= 1e-6 * TWO_PI


def test_comparison_stability_under_delta_halving():
    from esvortex.moduli import continuity_probe
    r1 = continuity_probe(ModuliPoint.divisor_at(1, 1.0), ModuliPoint.divisor_at(1.01, 1.0), SMALL_GRID)
    r2 = continuity_probe(ModuliPoint.divisor_at(1, 1.0), ModuliPoint.divisor_at(1.005, 1.0), SMALL_GRID)
    assert math.isfinite(r1.ratio) and r1.ratio > 0
    assert abs(r2.ratio / r1.ratio - 1.0) < 0.5
