"""Distance of |Phi|^2 to the z0 = inf limit along a geometric ladder of divisors.

    python scripts/uhlenbeck_ladder.py --energy 1 --ladder 2 4 8 16 32
"""

import argparse

from esvortex import Grid, ModuliPoint
from esvortex.kw_solver import SolverConfig
from esvortex.moduli import AT_INFINITY, solve_vortex, uhlenbeck_limit_probe


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--energy", type=float, default=1.0)
    ap.add_argument("--ladder", type=float, nargs="+", default=[2, 4, 8, 16])
    ap.add_argument("--window", type=float, default=3.0)
    ap.add_argument("--grid", default="512x32")
    args = ap.parse_args()
    n_rho, n_t = map(int, args.grid.lower().split("x"))
    grid = Grid(n_rho, n_t)
    dists = uhlenbeck_limit_probe(args.energy, args.ladder, grid, args.window)
    for z, d in zip(args.ladder, dists):
        print(f"z0 = {z:8g}   sup |d phi_sq| on rho <= {args.window:g}: {d:.6f}")
    ratios = [a / b for a, b in zip(dists, dists[1:])]
    print("successive ratios:", " ".join(f"{r:.3f}" for r in ratios))

    # the divisor-free point at the same energy, measured against the same limit
    cfg = SolverConfig(residual_tol=1e-9)
    lim, _ = solve_vortex(ModuliPoint.divisor_at(AT_INFINITY, args.energy), grid, cfg)
    if args.energy < 2.0:
        df, _ = solve_vortex(ModuliPoint.divisor_free(args.energy), grid, cfg)
        sel = grid.rho2d <= args.window
        gap = abs(df.phi_sq.values - lim.phi_sq.values)[sel].max()
        print(f"divisor-free E={args.energy:g} against the limit: {gap:.6f}")


if __name__ == "__main__":
    main()
