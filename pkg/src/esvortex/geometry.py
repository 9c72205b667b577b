"""Geometry of the base surface Sigma of the Euclidean Schwarzschild manifold.

Sigma = R^2 with polar coordinates (rho, t) and metric

    g = 2 rho / (rho + 1)^3 dt^2 + 1 / (2 rho (rho + 1)) drho^2,

which has volume 2 pi and a single parabolic end.  Near rho = 0 the metric is
a smooth polar origin in u = sqrt(2 rho), so the grid is cell-centred and
uniform in u: no cell centre ever sits on the pole.

All Laplacians use the positive sign convention, so that Delta(rho) = -2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

TWO_PI = 2.0 * np.pi


def _check_positive(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ValueError("metric data is singular at rho <= 0; use the regularised grid")
    return rho


def metric_coefficients(rho):
    """Return ``(g_tt, g_rhorho, vol_weight)`` at ``rho > 0``."""
    rho = _check_positive(rho)
    g_tt = 2.0 * rho / (rho + 1.0) ** 3
    g_rr = 1.0 / (2.0 * rho * (rho + 1.0))
    vol = 1.0 / (rho + 1.0) ** 2
    return g_tt, g_rr, vol


def laplacian_coefficients(rho):
    """Coefficients ``(a_tt, a_rhorho, a_rho)`` of d_t^2, d_rho^2, d_rho in Delta."""
    rho = _check_positive(rho)
    a_tt = -((rho + 1.0) ** 3) / (2.0 * rho)
    a_rr = -2.0 * rho * (rho + 1.0)
    a_r = np.full_like(rho, -2.0)
    return a_tt, a_rr, a_r


def chart_z(rho, t):
    """Global holomorphic coordinate z = sqrt(rho) exp(rho/2 - i t)."""
    rho = np.asarray(rho, dtype=float)
    t = np.asarray(t, dtype=float)
    return np.sqrt(rho) * np.exp(0.5 * rho) * np.exp(-1j * t)


def conformal_kappa(rho):
    """Conformal factor taking g_Sigma to the round metric on S^2 = Sigma + {inf}."""
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("rho must be non-negative")
    # (rho+1)^3 e^rho / (1 + rho e^rho)^2, rewritten to stay finite for large rho
    e = np.exp(-rho)
    return (rho + 1.0) ** 3 * e / (e + rho) ** 2


def gauss_curvature(rho):
    """-4 + 12/(rho+1).

    This is the scalar curvature of g, i.e. twice the Gauss curvature
    K = -2 + 6/(rho+1), whose integral over Sigma is 2 pi chi(R^2) = 2 pi.
    """
    rho = np.asarray(rho, dtype=float)
    return -4.0 + 12.0 / (rho + 1.0)


@dataclass(frozen=True)
class SigmaPoint:
    rho: float
    t: float

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be non-negative")
        object.__setattr__(self, "t", float(self.t) % TWO_PI)

    @property
    def z(self) -> complex:
        return complex(chart_z(self.rho, self.t))


@dataclass(frozen=True)
class Grid:
    """Truncated (rho, t) cylinder, cell-centred and uniform in u = sqrt(2 rho).

    Cell ``(i, j)`` covers ``u in [i h_u, (i+1) h_u]`` and
    ``t in [t_j - h_t/2, t_j + h_t/2]`` with ``t_j = j h_t``.  Arrays are laid
    out row-major as ``(n_rho, n_t)``.
    """

    n_rho: int
    n_t: int
    rho_max: float = 40.0

    def __post_init__(self):
        if self.n_rho < 8:
            raise ValueError("n_rho must be at least 8")
        if self.n_t < 8 and self.n_t != 1:
            raise ValueError("n_t must be at least 8 (or 1 for t-independent problems)")
        if not self.rho_max > 4:
            raise ValueError("rho_max must exceed 4")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_rho, self.n_t)

    @property
    def size(self) -> int:
        return self.n_rho * self.n_t

    @property
    def u_max(self) -> float:
        return float(np.sqrt(2.0 * self.rho_max))

    @property
    def h_u(self) -> float:
        return self.u_max / self.n_rho

    @property
    def h_t(self) -> float:
        return TWO_PI / self.n_t

    @property
    def h(self) -> float:
        """Radial mesh width in the regularising variable."""
        return self.h_u

    @cached_property
    def u(self) -> np.ndarray:
        return (np.arange(self.n_rho) + 0.5) * self.h_u

    @cached_property
    def u_faces(self) -> np.ndarray:
        return np.arange(self.n_rho + 1) * self.h_u

    @cached_property
    def rho(self) -> np.ndarray:
        return 0.5 * self.u**2

    @cached_property
    def rho_faces(self) -> np.ndarray:
        return 0.5 * self.u_faces**2

    @cached_property
    def t(self) -> np.ndarray:
        return np.arange(self.n_t) * self.h_t

    @cached_property
    def rho2d(self) -> np.ndarray:
        return np.broadcast_to(self.rho[:, None], self.shape)

    @cached_property
    def t2d(self) -> np.ndarray:
        return np.broadcast_to(self.t[None, :], self.shape)

    @cached_property
    def cell_volume(self) -> np.ndarray:
        """Exact Riemannian area of each cell, shape ``(n_rho, n_t)``."""
        inv = 1.0 / (self.rho_faces + 1.0)
        radial = (inv[:-1] - inv[1:]) * self.h_t
        return np.broadcast_to(radial[:, None], self.shape)

    @property
    def tail_volume(self) -> float:
        return TWO_PI / (self.rho_max + 1.0)

    @cached_property
    def z(self) -> np.ndarray:
        return chart_z(self.rho2d, self.t2d)

    # exterior rings: rho > rho_max as axisymmetric rings uniform in s = 1/(rho+1)

    @cached_property
    def n_ext(self) -> int:
        """Number of exterior rings; the first matches the last cell's radial width."""
        s_b = 1.0 / (self.rho_max + 1.0)
        width = self.rho_faces[-1] - self.rho_faces[-2]
        return max(16, int(np.ceil(1.0 / (s_b * width))))

    @cached_property
    def ext_s_faces(self) -> np.ndarray:
        s_b = 1.0 / (self.rho_max + 1.0)
        return s_b * (1.0 - np.arange(self.n_ext + 1) / self.n_ext)

    @cached_property
    def ext_rho(self) -> np.ndarray:
        s = 0.5 * (self.ext_s_faces[:-1] + self.ext_s_faces[1:])
        return 1.0 / s - 1.0

    @cached_property
    def ext_volume(self) -> np.ndarray:
        """Exact area of each exterior ring (2 pi ds, since dvol = ds dt)."""
        return TWO_PI * (self.ext_s_faces[:-1] - self.ext_s_faces[1:])

    @cached_property
    def _ext_stencil(self) -> tuple[float, np.ndarray]:
        # flux density 2 rho/(rho+1) f_rho = -2 (1 - s) s^2 f_s
        sf = self.ext_s_faces[1:-1]
        ds = self.ext_s_faces[0] - self.ext_s_faces[1]
        c_ext = TWO_PI * 2.0 * (1.0 - sf) * sf**2 / ds
        rf = self.rho_faces[-1]
        c_if = 2.0 * rf / (rf + 1.0) * self.h_t / (self.ext_rho[0] - self.rho[-1])
        return float(c_if), c_ext

    @property
    def ext_size(self) -> int:
        return self.size + self.n_ext

    @cached_property
    def ext_stiffness(self) -> sp.csr_matrix:
        """Stiffness of the grid extended by the exterior rings (index ``size + k``)."""
        c_if, c_ext = self._ext_stencil
        n, k = self.size, self.n_ext
        last = np.arange(self.size - self.n_t, self.size)
        ring = np.arange(n, n + k)
        rows = [last, np.full(self.n_t, n), ring[:-1], ring[1:]]
        cols = [np.full(self.n_t, n), last, ring[1:], ring[:-1]]
        vals = [np.full(self.n_t, -c_if)] * 2 + [-c_ext, -c_ext]
        off = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n + k, n + k),
        ).tocsr()
        full = (sp.block_diag([self.stiffness, sp.csr_matrix((k, k))]) + off).tocsr()
        full = full - sp.diags(np.asarray(full.sum(axis=1)).ravel())
        return full.tocsr()

    def apply_ext_stiffness(self, main: np.ndarray, ext: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``ext_stiffness`` applied face by face; returns (main part, exterior part)."""
        c_if, c_ext = self._ext_stencil
        v = np.asarray(main, dtype=float).reshape(self.shape)
        e = np.asarray(ext, dtype=float)
        out_m = self.apply_stiffness(v)
        out_e = np.zeros(self.n_ext)
        flux = c_if * (e[0] - v[-1])
        out_m[-1] -= flux
        out_e[0] += float(np.sum(flux))
        flux = c_ext * (e[1:] - e[:-1])
        out_e[:-1] -= flux
        out_e[1:] += flux
        return out_m, out_e

    def interior_mask(self, outer: int = 1) -> np.ndarray:
        """Cells at least ``outer`` rings away from the truncation radius."""
        mask = np.ones(self.shape, dtype=bool)
        if outer:
            mask[-outer:, :] = False
        return mask

    @cached_property
    def _stencil(self) -> tuple[np.ndarray, np.ndarray]:
        # radial face couplings between ring i and i+1 (interior faces only)
        uf = self.u_faces[1:-1]
        rf = self.rho_faces[1:-1]
        c_rad = uf / (rf + 1.0) * self.h_t / self.h_u
        # angular couplings within each ring
        if self.n_t == 1:
            c_ang = np.zeros(self.n_rho)
        else:
            c_ang = (self.rho + 1.0) / self.u * self.h_u / self.h_t
        return c_rad, c_ang

    @property
    def outer_coupling(self) -> float:
        """Radial coupling of the outermost face (used by extrapolated ghosts)."""
        return float(self.u_faces[-1] / (self.rho_faces[-1] + 1.0) * self.h_t / self.h_u)

    def apply_stiffness(self, values: np.ndarray) -> np.ndarray:
        """``stiffness @ values`` evaluated face by face.

        Summing couplings times differences avoids the cancellation of the
        assembled row sum, which matters where cell areas are tiny.
        """
        v = np.asarray(values, dtype=float).reshape(self.shape)
        c_rad, c_ang = self._stencil
        out = np.zeros(self.shape)
        flux = c_rad[:, None] * (v[1:] - v[:-1])
        out[:-1] -= flux
        out[1:] += flux
        if self.n_t > 1:
            flux = c_ang[:, None] * (np.roll(v, -1, axis=1) - v)
            out -= flux
            out += np.roll(flux, 1, axis=1)
        return out

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Symmetric positive semidefinite matrix A with (A f)_c = cell integral of Delta f.

        Homogeneous Neumann at rho_max; periodic in t; the pole face carries no
        flux because its length vanishes.
        """
        n_r, n_t = self.shape
        c_rad, c_ang = self._stencil
        idx = np.arange(self.size).reshape(self.shape)
        rows, cols, vals = [], [], []

        a = idx[:-1, :].ravel()
        b = idx[1:, :].ravel()
        c = np.repeat(c_rad, n_t)
        rows += [a, b]
        cols += [b, a]
        vals += [-c, -c]

        if n_t > 1:
            a = idx.ravel()
            b = np.roll(idx, -1, axis=1).ravel()
            c = np.repeat(c_ang, n_t)
            rows += [a, b]
            cols += [b, a]
            vals += [-c, -c]

        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        off = sp.coo_matrix((vals, (rows, cols)), shape=(self.size, self.size)).tocsr()
        diag = -np.asarray(off.sum(axis=1)).ravel()
        return (off + sp.diags(diag)).tocsr()


@dataclass(frozen=True)
class DiscreteField:
    """One real value per cell of ``grid``; immutable."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.size != self.grid.size:
            raise ValueError(f"expected {self.grid.size} values, got {v.size}")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "DiscreteField":
        return cls(grid, np.broadcast_to(fn(grid.rho2d, grid.t2d), grid.shape))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "DiscreteField":
        return cls(grid, np.full(grid.shape, float(value)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def _values(field_or_array, grid: Grid | None = None) -> np.ndarray:
    if isinstance(field_or_array, DiscreteField):
        return field_or_array.values
    arr = np.asarray(field_or_array, dtype=float)
    if grid is not None:
        arr = np.broadcast_to(arr, grid.shape)
    return arr


def integrate(field: DiscreteField, tail_asymptote: float | None = None,
              tail_exact: float | None = None) -> float:
    """Integral over Sigma with respect to dvol.

    Cells contribute ``value * exact cell area``.  The region beyond rho_max
    (area 2 pi / (rho_max + 1)) is accounted for either by a constant
    asymptote of the integrand or by a precomputed remainder ``tail_exact``.
    """
    grid = field.grid
    total = float(np.sum(field.values * grid.cell_volume))
    if tail_asymptote is not None:
        total += tail_asymptote * grid.tail_volume
    if tail_exact is not None:
        total += float(tail_exact)
    return total


def laplacian(field: DiscreteField, outer: str = "neumann",
              outer_flux: np.ndarray | None = None) -> DiscreteField:
    """Finite-volume positive Laplacian of a cell field.

    ``outer`` selects the treatment of the truncation face: ``"neumann"``
    (zero flux) or ``"extrapolate"`` (quadratic ghost, for derived fields whose
    slope at rho_max is not zero).  ``outer_flux[j]`` optionally adds the cell
    integral contribution ``-outer_flux[j] * h_t`` to the last ring; the solver
    uses it to couple to the exterior region.
    """
    grid = field.grid
    v = field.values
    cell_int = grid.apply_stiffness(v)
    if outer == "extrapolate":
        ghost = 3.0 * v[-1] - 3.0 * v[-2] + v[-3]
        cell_int[-1] += grid.outer_coupling * (v[-1] - ghost)
    elif outer != "neumann":
        raise ValueError(f"unknown outer treatment {outer!r}")
    if outer_flux is not None:
        cell_int[-1] -= np.asarray(outer_flux) * grid.h_t
    return DiscreteField(grid, cell_int / grid.cell_volume)
