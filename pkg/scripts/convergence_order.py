"""Observed order of the discrete residual and of the vortex observables.

The exact Charap-Duff solution is moved to f = ln 2 + beta / 2 by the gauge
beta = rho e^{-rho}, then the residual of the injected solution is tracked
under radial refinement, together with the O(h^2) error of |nabla Phi|^2.

    python scripts/convergence_order.py --levels 64 128 256 512 1024
"""

import argparse
import math

import numpy as np

from esvortex import Grid, ModuliPoint
from esvortex.background import gauge_shifted
from esvortex.kw_solver import residual
from esvortex.moduli import solve_vortex

CD = ModuliPoint.divisor_at(0, 1.0)


def beta(rho):
    return rho * np.exp(-rho)


def lap_beta(rho):
    # positive Laplacian of rho e^{-rho}, axisymmetric part
    return -2.0 * rho * (rho + 1.0) * (rho - 2.0) * np.exp(-rho) - 2.0 * (1.0 - rho) * np.exp(-rho)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", type=int, nargs="+", default=[128, 256, 512])
    ap.add_argument("--n-t", type=int, default=32)
    args = ap.parse_args()
    prev = None
    print(" n_rho      h_u     residual   order   grad err   order")
    for n in args.levels:
        grid = Grid(n, args.n_t)
        bg = gauge_shifted(CD, grid, beta, lap_beta)
        r = residual(bg, math.log(2.0) + 0.5 * beta(grid.rho2d))[0]
        v, _ = solve_vortex(CD, grid)
        exact = 4.0 / (grid.rho2d + 1.0) ** 2
        g = float(np.max(np.abs(v.grad_phi_sq.values - exact)[grid.interior_mask(1)]))
        if prev is None:
            print(f"{n:6d} {grid.h_u:8.5f} {r:12.3e}       - {g:10.3e}       -")
        else:
            print(f"{n:6d} {grid.h_u:8.5f} {r:12.3e} {math.log2(prev[0] / r):7.3f} "
                  f"{g:10.3e} {math.log2(prev[1] / g):7.3f}")
        prev = (r, g)


if __name__ == "__main__":
    main()
