"""Experiments on the moduli space: canonical map, staticity, continuity, Uhlenbeck limit.

The moduli space is represented by its parameter chart (family, E, z0).
Everything measured here is gauge invariant: the divisor (zero of Phi),
the t-dependence of |Phi|^2, and sup-distances between |Phi|^2 fields.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .background import Family, ModuliPoint, kw_data
from .geometry import Grid
from .kw_solver import SolverConfig, apply_laplacian, newton_solve
from .vortex import NotConvergedError, VortexField, build_vortex, degree, taubes_check, ymh_energy

AT_INFINITY = complex(math.inf, 0.0)


class AmbiguousMinimumError(ValueError):
    """|Phi|^2 has near-equal minima in cells that are not neighbours."""


@dataclass(frozen=True)
class ModuliSample:
    point: ModuliPoint
    degree: float
    energy: float
    taubes_max: float
    divisor_estimate: complex
    static: bool
    t_variation: float
    iterations: int
    residual: float

    def __post_init__(self):
        finite = not cmath.isinf(self.divisor_estimate)
        expect = self.point.family is Family.DIVISOR_AT and not self.point.at_infinity
        if finite != expect:
            raise ValueError("divisor estimate must be finite exactly for a finite divisor")


def solve_vortex(point: ModuliPoint, grid: Grid, cfg: SolverConfig | None = None,
                 init=None) -> tuple[VortexField, object]:
    """Solve and assemble the vortex, raising if the solve did not converge."""
    bg = kw_data(point, grid)
    report = newton_solve(bg, cfg, init)
    return build_vortex(bg, report), report


# ---------------------------------------------------------------- divisor

def _neighbours(grid: Grid, a: tuple[int, int], b: tuple[int, int]) -> bool:
    (i1, j1), (i2, j2) = a, b
    if i1 == 0 and i2 == 0:
        return True  # every cell of the first row touches the pole
    dj = abs(j1 - j2) % grid.n_t
    return abs(i1 - i2) <= 1 and min(dj, grid.n_t - dj) <= 1


def _stencil_cells(grid: Grid, i0: int, j0: int) -> list[tuple[int, int]]:
    """5 x 3 block of cells around (i0, j0), continued across the pole."""
    n_t = grid.n_t
    cells = []
    for di in range(-2, 3):
        for dj in (-1, 0, 1):
            i, j = i0 + di, (j0 + dj) % n_t
            if i < 0:
                i, j = -i - 1, (j + n_t // 2) % n_t
            if i < grid.n_rho:
                cells.append((i, j))
    return sorted(set(cells))


def _local_minima(grid: Grid, phi: np.ndarray) -> np.ndarray:
    """Cells not above any of their 8 neighbours; the two outermost rows are skipped.

    For E > 1 |Phi|^2 also decays towards the end, so the global minimum
    can sit at rho_max rather than at the divisor.
    """
    n_t = grid.n_t
    across = np.roll(phi[0], n_t // 2)[None, :] if n_t > 1 else phi[:1]
    pad = np.vstack([across, phi, np.full((1, n_t), np.inf)])
    best = np.full(phi.shape, np.inf)
    for di in (-1, 0, 1):
        rows = pad[1 + di: 1 + di + phi.shape[0]]
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            best = np.minimum(best, np.roll(rows, -dj, axis=1))
    mask = phi <= best
    mask[-2:] = False
    return mask


def divisor_locate(v: VortexField, rel_tol: float = 1e-9) -> complex:
    """Zero of Phi in the z-chart, or ``AT_INFINITY`` for an empty divisor.

    The divisor is taken to be the lowest interior local minimum of |Phi|^2.
    A quadratic in (Re z, Im z) is least-squares fitted to |Phi|^2 on the
    cells around it, and the quadratic's critical point is returned.
    """
    p = v.point
    if p is None or p.at_infinity:
        return AT_INFINITY
    grid = v.grid
    phi = v.phi_sq.values
    cand = np.argwhere(_local_minima(grid, phi))
    if len(cand) == 0:
        raise AmbiguousMinimumError("|Phi|^2 has no interior local minimum")
    vals = phi[cand[:, 0], cand[:, 1]]
    i0, j0 = map(int, cand[int(np.argmin(vals))])
    lo = phi[i0, j0]
    near = cand[vals <= lo + rel_tol * max(float(np.max(phi)), 1e-300)]
    for i, j in near:
        if not _neighbours(grid, (i0, j0), (int(i), int(j))):
            raise AmbiguousMinimumError(
                f"|Phi|^2 has competing minima at cells {(i0, j0)} and {(int(i), int(j))}"
            )
    cells = _stencil_cells(grid, i0, j0)
    z = np.array([grid.z[c] for c in cells])
    vals = np.array([phi[c] for c in cells])
    z_c = grid.z[i0, j0]
    x, y = (z - z_c).real, (z - z_c).imag
    design = np.column_stack([np.ones_like(x), x, y, x * x, x * y, y * y])
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    _, bx, by, axx, axy, ayy = coef
    hess = np.array([[2 * axx, axy], [axy, 2 * ayy]])
    if np.linalg.det(hess) <= 0 or hess[0, 0] <= 0:
        return complex(z_c)
    dx, dy = np.linalg.solve(hess, [-bx, -by])
    return complex(z_c + complex(dx, dy))


def cell_diameter(grid: Grid, z: complex) -> float:
    """Diameter in the z-chart of the grid cell containing ``z``."""
    if z == 0:
        return float(abs(grid.z[0, 0]) * 2.0)
    rho = _rho_of_modulus(abs(z))
    u = math.sqrt(2.0 * rho)
    i = min(int(u / grid.h_u), grid.n_rho - 1)
    r_in = math.sqrt(grid.rho_faces[i]) * math.exp(0.5 * grid.rho_faces[i])
    r_out = math.sqrt(grid.rho_faces[i + 1]) * math.exp(0.5 * grid.rho_faces[i + 1])
    return float(math.hypot(r_out - r_in, r_out * grid.h_t))


def _rho_of_modulus(r: float) -> float:
    """Solve rho e^rho = r^2 for rho >= 0 by Newton iteration."""
    target = math.log(r * r)
    rho = max(target, 1e-3) if target > 0 else r * r
    for _ in range(100):
        # F(rho) = log rho + rho - target
        step = (math.log(rho) + rho - target) / (1.0 / rho + 1.0)
        rho = max(rho - step, 0.5 * rho)
        if abs(step) < 1e-15 * max(rho, 1.0):
            break
    return rho


# -------------------------------------------------------------- staticity

def staticity_probe(v: VortexField, tol: float = 1e-10) -> tuple[bool, float]:
    """Largest t-oscillation of |Phi|^2 over the rows; static if at most 10 tol."""
    phi = v.phi_sq.values
    variation = float(np.max(np.ptp(phi, axis=1)))
    return variation <= 10.0 * tol, variation


# ------------------------------------------------------------- continuity

@dataclass(frozen=True)
class ContinuityResult:
    ratio: float
    field_distance: float
    data_distance: float
    equal_inputs: bool


def _l2(grid: Grid, cells: np.ndarray, ext: np.ndarray | None = None, mask=None) -> float:
    w = grid.cell_volume if mask is None else np.where(mask, grid.cell_volume, 0.0)
    total = float(np.sum(w * cells**2))
    if ext is not None:
        total += float(np.sum(grid.ext_volume * ext**2))
    return math.sqrt(total)


def continuity_probe(p1: ModuliPoint, p2: ModuliPoint, grid: Grid,
                     window: tuple[float, float] = (0.0, 10.0),
                     cfg: SolverConfig | None = None) -> ContinuityResult:
    """Ratio of the change in f over a window to the change in the data (g, h).

    The window norm is ||df||_2 + ||Delta df||_2 restricted to
    ``window[0] <= rho <= window[1]``; the data norm is
    ||g1 - g2||_2 + ||h1 - h2||_2 over all of Sigma.
    """
    if p1 == p2:
        return ContinuityResult(0.0, 0.0, 0.0, True)
    mask = (grid.rho2d >= window[0]) & (grid.rho2d <= window[1])
    if not mask.any():
        raise ValueError(f"window {window} contains no cells")
    bgs = [kw_data(p, grid) for p in (p1, p2)]
    reps = [newton_solve(bg, cfg) for bg in bgs]
    for p, r in zip((p1, p2), reps):
        if not r.converged:
            raise NotConvergedError(f"{p.label()}: solve did not converge")
    df = reps[0].f.values - reps[1].f.values
    lap = (apply_laplacian(reps[0].f, bgs[0], reps[0].f_exterior).values
           - apply_laplacian(reps[1].f, bgs[1], reps[1].f_exterior).values)
    num = _l2(grid, df, mask=mask) + _l2(grid, lap, mask=mask)
    dg = _l2(grid, bgs[0].g.values - bgs[1].g.values, bgs[0].ext_g - bgs[1].ext_g)
    dh = _l2(grid, bgs[0].h.values - bgs[1].h.values,
             np.exp(bgs[0].ext_log_h) - np.exp(bgs[1].ext_log_h))
    den = dg + dh
    if den == 0.0:
        return ContinuityResult(0.0 if num == 0.0 else math.inf, num, den, True)
    return ContinuityResult(num / den, num, den, False)


# -------------------------------------------------------- Uhlenbeck limit

def uhlenbeck_limit_probe(energy: float, z0s: Sequence[complex], grid: Grid,
                          window: float = 3.0, cfg: SolverConfig | None = None) -> list[float]:
    """Sup over rho <= window of |Phi|^2 distances to the z0 = inf limit vortex.

    The limit vortex uses the divisor family with the section normalised by
    sqrt(1 + |z0|^2) and z0 -> inf, i.e. h = e^{-E rho} / (2 (rho + 1)).
    Its f grows like log(rho + 1), which lifts the rounding floor of the
    residual above 1e-10, so the default tolerance here is 1e-9.
    """
    cfg = cfg or SolverConfig(residual_tol=1e-9)
    mask = grid.rho2d <= window
    if not mask.any():
        raise ValueError(f"window rho <= {window} contains no cells")
    limit, _ = solve_vortex(ModuliPoint.divisor_at(complex(math.inf, 0.0), energy), grid, cfg)
    out = []
    for z0 in z0s:
        v, _ = solve_vortex(ModuliPoint.divisor_at(z0, energy), grid, cfg)
        out.append(float(np.max(np.abs(v.phi_sq.values - limit.phi_sq.values)[mask])))
    return out


# ---------------------------------------------------------- canonical map

def sample(point: ModuliPoint, grid: Grid, cfg: SolverConfig | None = None,
           init=None) -> ModuliSample:
    cfg = cfg or SolverConfig()
    v, report = solve_vortex(point, grid, cfg, init)
    static, variation = staticity_probe(v, cfg.residual_tol)
    return ModuliSample(
        point=point,
        degree=degree(v),
        energy=ymh_energy(v) / 4.0,
        taubes_max=taubes_check(v),
        divisor_estimate=divisor_locate(v),
        static=static,
        t_variation=variation,
        iterations=report.iterations,
        residual=report.final_residual_sup,
    )


def canonical_map(s: ModuliSample) -> complex:
    """Image of the instanton in C + {inf}: the zero of Phi, or infinity."""
    return s.divisor_estimate
