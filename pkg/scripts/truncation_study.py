"""Sensitivity of energy, degree and f on rho <= 20 to the truncation radius.

Both grids share the radial spacing in u = sqrt(2 rho); f is compared after
cubic interpolation in u.

    python scripts/truncation_study.py
"""

import argparse
import math

import numpy as np
from scipy.interpolate import CubicSpline

from esvortex import Grid, ModuliPoint
from esvortex.instanton import ym_energy
from esvortex.kw_solver import SolverConfig
from esvortex.moduli import solve_vortex
from esvortex.vortex import degree

POINTS = [ModuliPoint.divisor_at(0, 1.0), ModuliPoint.divisor_free(0.5),
          ModuliPoint.divisor_at(2 + 1j, 1.5), ModuliPoint.divisor_free(1.75)]


def matched_grid(base: Grid, rho_max: float) -> Grid:
    n = int(round(base.n_rho * math.sqrt(rho_max / base.rho_max)))
    return Grid(n, base.n_t, rho_max)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--radii", type=float, nargs="+", default=[40.0, 80.0])
    ap.add_argument("--compare-below", type=float, default=20.0)
    args = ap.parse_args()
    base = Grid(512, 32, args.radii[0])
    for p in POINTS:
        rows = []
        for r in args.radii:
            grid = matched_grid(base, r)
            tol = 1e-10 if r <= 40 else 1e-9
            v, rep = solve_vortex(p, grid, SolverConfig(residual_tol=tol))
            rows.append((grid, v, rep))
        g0, v0, _ = rows[0]
        sel = g0.rho <= args.compare_below
        print(p.label())
        for grid, v, rep in rows[1:]:
            spline = CubicSpline(grid.u, v.f.values, axis=0)
            df = float(np.max(np.abs(v0.f.values[sel] - spline(g0.u[sel]))))
            print(f"  rho_max {g0.rho_max:g} -> {grid.rho_max:g} ({grid.n_rho} cells): "
                  f"dE {abs(ym_energy(v) - ym_energy(v0)):.2e}  ddeg {abs(degree(v) - degree(v0)):.2e}  "
                  f"df {df:.2e}  residual {rep.final_residual_sup:.1e}")


if __name__ == "__main__":
    main()
