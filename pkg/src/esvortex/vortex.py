"""Vortex observables assembled from a Kazdan-Warner solution.

With Phi = e^f Phi_0 and tau = 4 the vortex fields on Sigma are

    phi_sq      = |Phi|^2 = 2 h e^{2f}
    curv        = i Lambda F = bg_curvature + Delta f
    grad_phi_sq = |nabla Phi|^2 = curv * phi_sq - Delta(phi_sq) / 2

and the vortex equation reads 2 curv = 4 - phi_sq.  The same observables are
kept on the grid's exterior rings (rho > rho_max), so integrals over Sigma
are complete.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .background import TAU, BackgroundData, ModuliPoint
from .geometry import TWO_PI, DiscreteField, Grid
from .kw_solver import SolverReport, apply_laplacian, exterior_laplacian


class NotConvergedError(ValueError):
    """Observables were requested from a solve that did not converge."""


@dataclass(frozen=True)
class VortexField:
    """Cell values of the vortex observables, plus phi_sq and curv per exterior ring."""

    point: ModuliPoint | None
    f: DiscreteField
    phi_sq: DiscreteField
    curv: DiscreteField
    grad_phi_sq: DiscreteField
    lap_phi_sq: DiscreteField
    ext_phi_sq: np.ndarray = field(repr=False)
    ext_curv: np.ndarray = field(repr=False)

    @property
    def grid(self) -> Grid:
        return self.f.grid

    def integrate(self, cells: np.ndarray, ext: np.ndarray) -> float:
        """Integral over Sigma of a quantity given on the cells and exterior rings."""
        grid = self.grid
        return float(np.sum(cells * grid.cell_volume)) + float(np.sum(ext * grid.ext_volume))


def _direct_gradient(grid: Grid, psi: np.ndarray) -> np.ndarray:
    """|nabla Phi|^2 = |d psi|^2 / (2 psi) by centred differences of psi = |Phi|^2."""
    n_r, n_t = grid.shape
    # continue across the pole: cell (-1, j) is cell (0, j + n_t/2)
    if n_t > 1 and n_t % 2 == 0:
        across = np.roll(psi[0], n_t // 2)
    else:
        across = psi[0]
    ext = np.vstack([across[None, :], psi])
    d_u = np.empty_like(psi)
    d_u[:-1] = (ext[2:] - ext[:-2]) / (2.0 * grid.h_u)
    d_u[-1] = (3.0 * psi[-1] - 4.0 * psi[-2] + psi[-3]) / (2.0 * grid.h_u)
    if n_t > 1:
        d_t = (np.roll(psi, -1, axis=1) - np.roll(psi, 1, axis=1)) / (2.0 * grid.h_t)
    else:
        d_t = np.zeros_like(psi)
    u = grid.u[:, None]
    rho1 = grid.rho[:, None] + 1.0
    dpsi2 = rho1 * d_u**2 + rho1**3 * d_t**2 / u**2
    return dpsi2 / (2.0 * np.maximum(psi, np.finfo(float).tiny))


def build_vortex(bg: BackgroundData, report: SolverReport, *,
                 direct_gradient: bool = False) -> VortexField:
    """Vortex observables from a converged solve.

    ``direct_gradient`` replaces the Weitzenboeck evaluation of |nabla Phi|^2
    by centred differences (cross-check only: it carries O(h^2) error and is
    not tied to the discrete vortex equation).
    """
    if not report.converged:
        raise NotConvergedError(
            f"solve did not converge (residual {report.final_residual_sup:.3e}); "
            "refusing to build vortex observables"
        )
    grid = bg.grid
    f, f_ext = report.f, report.f_exterior
    phi = 2.0 * np.exp(np.minimum(bg.log_h.values + 2.0 * f.values, 700.0))
    ext_phi = 2.0 * np.exp(np.minimum(bg.ext_log_h + 2.0 * f_ext, 700.0))
    curv = bg.bg_curvature.values + apply_laplacian(f, bg, f_ext).values
    ext_curv = bg.ext_bg + exterior_laplacian(bg, f, f_ext)
    phi_field = DiscreteField(grid, phi)
    lap_phi = apply_laplacian(phi_field, bg, ext_phi)
    if direct_gradient:
        grad = _direct_gradient(grid, phi)
    else:
        grad = curv * phi - 0.5 * lap_phi.values
    return VortexField(
        point=bg.point,
        f=f,
        phi_sq=phi_field,
        curv=DiscreteField(grid, curv),
        grad_phi_sq=DiscreteField(grid, grad),
        lap_phi_sq=lap_phi,
        ext_phi_sq=ext_phi,
        ext_curv=ext_curv,
    )


def reducible_vortex(grid: Grid) -> VortexField:
    """The Phi = 0 configuration with constant curvature tau/2 = 2."""
    zeros = DiscreteField.constant(grid, 0.0)
    return VortexField(
        point=None,
        f=zeros,
        phi_sq=zeros,
        curv=DiscreteField.constant(grid, TAU / 2.0),
        grad_phi_sq=zeros,
        lap_phi_sq=zeros,
        ext_phi_sq=np.zeros(grid.n_ext),
        ext_curv=np.full(grid.n_ext, TAU / 2.0),
    )


def vortex_residual(v: VortexField) -> float:
    """sup |2 curv - (4 - phi_sq)| over the cells."""
    r = 2.0 * v.curv.values - (TAU - v.phi_sq.values)
    return float(np.max(np.abs(r)))


def degree(v: VortexField) -> float:
    """(1/2 pi) times the integral of i Lambda F, exterior region included."""
    return v.integrate(v.curv.values, v.ext_curv) / TWO_PI


def energy_integrand(v: VortexField) -> np.ndarray:
    """Cellwise curv^2 + |nabla Phi|^2 + (4 - phi_sq)^2 / 4."""
    return v.curv.values**2 + v.grad_phi_sq.values + 0.25 * (TAU - v.phi_sq.values) ** 2


def ymh_energy(v: VortexField) -> float:
    """(1/2 pi) times the Yang-Mills-Higgs energy; equals 4 deg for a vortex.

    On the exterior rings |nabla Phi|^2 is replaced by curv * phi_sq, its
    integrated Weitzenboeck form.  The Delta(phi_sq) term integrates to zero
    over Sigma, so the part of it carried by the cells is moved outside.
    """
    grid = v.grid
    ext = v.ext_curv**2 + v.ext_curv * v.ext_phi_sq + 0.25 * (TAU - v.ext_phi_sq) ** 2
    total = v.integrate(energy_integrand(v), ext)
    total += 0.5 * float(np.sum(v.lap_phi_sq.values * grid.cell_volume))
    return total / TWO_PI


def taubes_check(v: VortexField) -> float:
    """Maximum of phi_sq over the cells (bounded by tau = 4 for a vortex)."""
    return float(np.max(v.phi_sq.values))


def weitzenbock_residual(v: VortexField, outer: int = 1) -> float:
    """sup of |Delta phi_sq - (4 - phi_sq) phi_sq + 2 |nabla Phi|^2| on interior cells."""
    phi = v.phi_sq.values
    r = v.lap_phi_sq.values - (TAU - phi) * phi + 2.0 * v.grad_phi_sq.values
    mask = v.grid.interior_mask(outer)
    return float(np.max(np.abs(r[mask])))
