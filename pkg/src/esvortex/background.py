"""Kazdan-Warner data (g, h) for points of the instanton moduli space.

Two families of background Hermitian structures H = e^{-alpha} H_0 on the
trivial bundle over Sigma are used, each with a monic holomorphic section:

* divisor free:  Phi_0 = 1,        alpha = E rho,                 0 < E < 2
* divisor at z0: Phi_0 = z - z0,   alpha = E rho + ln(rho + 1),   1 <= E < 2

The background curvature is normalised as i Lambda F = -Delta(alpha) / 2, so
that deg = E in both families, and with tau = 4

    g = 2 - i Lambda F,     h = |Phi_0|^2 e^{-alpha} / 2.

``z0 = inf`` in the second family denotes the Uhlenbeck limit section,
(z - z0) / sqrt(1 + |z0|^2) -> 1, i.e. h = e^{-alpha} / 2.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .geometry import TWO_PI, DiscreteField, Grid

TAU = 4.0
LOG_TINY = float(np.log(np.finfo(float).tiny))


class Family(str, Enum):
    DIVISOR_FREE = "divisor_free"
    DIVISOR_AT = "divisor_at"


class BradlowError(ValueError):
    """The background violates Bradlow's condition, so no vortex exists."""


@dataclass(frozen=True)
class ModuliPoint:
    """A target instanton: family, energy and (for ``DIVISOR_AT``) the divisor."""

    family: Family
    energy: float
    z0: complex | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "energy", float(self.energy))
        if self.family is Family.DIVISOR_AT:
            z0 = 0j if self.z0 is None else complex(self.z0)
            object.__setattr__(self, "z0", z0)
        elif self.z0 is not None:
            raise ValueError("a divisor-free point carries no z0")

    @classmethod
    def divisor_free(cls, energy: float) -> "ModuliPoint":
        return cls(Family.DIVISOR_FREE, energy)

    @classmethod
    def divisor_at(cls, z0: complex, energy: float = 1.0) -> "ModuliPoint":
        return cls(Family.DIVISOR_AT, energy, z0)

    @property
    def at_infinity(self) -> bool:
        return self.family is Family.DIVISOR_FREE or cmath.isinf(self.z0)

    def validate(self) -> "ModuliPoint":
        e = self.energy
        if not math.isfinite(e):
            raise ValueError("energy must be finite")
        if e >= 2.0:
            raise BradlowError(
                f"E = {e:g} violates Bradlow's condition: irreducible instantons need E < 2"
            )
        if self.family is Family.DIVISOR_FREE:
            if e <= 0.0:
                raise ValueError("divisor-free family needs E in (0, 2)")
        else:
            if e < 1.0:
                raise ValueError("a point divisor needs E in [1, 2)")
            if cmath.isnan(self.z0):
                raise ValueError("z0 must be a complex number or infinity")
        return self

    def label(self) -> str:
        if self.family is Family.DIVISOR_FREE:
            return f"divisor_free E={self.energy:g}"
        return f"divisor_at z0={_fmt_complex(self.z0)} E={self.energy:g}"


def _fmt_complex(z: complex) -> str:
    if cmath.isinf(z):
        return "inf"
    if z.imag == 0:
        return f"{z.real:g}"
    return f"{z.real:g}{z.imag:+g}i"


def normalize_divisor(z0: complex) -> tuple[float, float]:
    """Rotate the divisor onto the non-negative real axis.

    Returns ``(r, theta)`` with ``r = |z0|``; fields for ``z0`` at ``t`` equal
    fields for ``r`` at ``t + theta``.
    """
    z0 = complex(z0)
    return abs(z0), cmath.phase(z0) if z0 != 0 else 0.0


def hermitian_exponent(point: ModuliPoint, rho):
    rho = np.asarray(rho, dtype=float)
    if point.family is Family.DIVISOR_FREE:
        return point.energy * rho
    return point.energy * rho + np.log1p(rho)


def background_curvature(point: ModuliPoint, rho):
    """i Lambda F of the background connection, -Delta(alpha)/2."""
    rho = np.asarray(rho, dtype=float)
    if point.family is Family.DIVISOR_FREE:
        return np.full_like(rho, point.energy)
    return (point.energy - 1.0) + 2.0 / (rho + 1.0)


def log_abs2_section(point: ModuliPoint, rho, t):
    """log |Phi_0(z)|^2 in the chart z = sqrt(rho) exp(rho/2 - i t)."""
    rho = np.asarray(rho, dtype=float)
    t = np.asarray(t, dtype=float)
    shape = np.broadcast_shapes(rho.shape, t.shape)
    if point.family is Family.DIVISOR_FREE or cmath.isinf(point.z0):
        return np.zeros(shape)
    rho, t = np.broadcast_to(rho, shape), np.broadcast_to(t, shape)
    with np.errstate(divide="ignore"):
        log_r2 = rho + np.log(rho)
    z0 = point.z0
    if z0 == 0:
        return log_r2
    log_a2 = 2.0 * math.log(abs(z0))
    outer = log_r2 >= log_a2
    out = np.empty(shape)
    # |z - z0|^2 = |z|^2 |1 - z0/z|^2, evaluated without forming z
    w = z0 * np.exp(-0.5 * log_r2[outer] + 1j * t[outer])
    out[outer] = log_r2[outer] + np.log(np.abs(1.0 - w) ** 2)
    with np.errstate(divide="ignore", over="ignore"):
        zi = np.exp(0.5 * log_r2[~outer] - 1j * t[~outer]) / z0
        out[~outer] = log_a2 + np.log(np.abs(1.0 - zi) ** 2)
    return out


def log_h(point: ModuliPoint, rho, t):
    """log h = log|Phi_0|^2 - alpha - log 2, clamped to stay finite at the divisor."""
    rho = np.asarray(rho, dtype=float)
    if point.family is Family.DIVISOR_AT and cmath.isinf(point.z0):
        val = -point.energy * rho - np.log1p(rho) - math.log(2.0)
        return np.broadcast_to(val, np.broadcast_shapes(rho.shape, np.shape(t))).copy()
    val = log_abs2_section(point, rho, t) - hermitian_exponent(point, rho) - math.log(2.0)
    return np.maximum(val, LOG_TINY)


@dataclass(frozen=True)
class BackgroundData:
    """Kazdan-Warner coefficients on a grid and on its exterior rings.

    The ``ext_*`` arrays hold one value per exterior ring (rho > rho_max),
    averaged over t; the families are t-independent there up to terms of
    size |z0 / z| ~ e^{-rho/2}.
    """

    point: ModuliPoint
    grid: Grid
    g: DiscreteField
    h: DiscreteField
    log_h: DiscreteField
    alpha: DiscreteField
    bg_curvature: DiscreteField
    ext_g: np.ndarray = field(repr=False)
    ext_log_h: np.ndarray = field(repr=False)
    ext_bg: np.ndarray = field(repr=False)

    def ext_integral(self, values: np.ndarray) -> float:
        """Integral over rho > rho_max of a quantity given per exterior ring."""
        return float(np.sum(np.asarray(values) * self.grid.ext_volume))


def sample_background(point: ModuliPoint, grid: Grid, *,
                      curvature: Callable, log_h_fn: Callable, alpha: Callable) -> BackgroundData:
    """Build ``BackgroundData`` from closed-form callables of ``(rho, t)``."""
    rho, t = grid.rho2d, grid.t2d
    bg = np.broadcast_to(curvature(rho, t), grid.shape)
    lh = np.broadcast_to(log_h_fn(rho, t), grid.shape)
    al = np.broadcast_to(alpha(rho, t), grid.shape)

    er = np.broadcast_to(grid.ext_rho[:, None], (grid.n_ext, grid.n_t))
    et = np.broadcast_to(grid.t[None, :], er.shape)
    ebg = np.broadcast_to(curvature(er, et), er.shape).mean(axis=1)
    elh = logsumexp(np.broadcast_to(log_h_fn(er, et), er.shape), axis=1) - math.log(grid.n_t)

    return BackgroundData(
        point=point,
        grid=grid,
        g=DiscreteField(grid, TAU / 2.0 - bg),
        h=DiscreteField(grid, np.exp(lh)),
        log_h=DiscreteField(grid, lh),
        alpha=DiscreteField(grid, al),
        bg_curvature=DiscreteField(grid, bg),
        ext_g=TAU / 2.0 - ebg,
        ext_log_h=np.maximum(elh, LOG_TINY),
        ext_bg=ebg,
    )


def kw_data(point: ModuliPoint, grid: Grid) -> BackgroundData:
    point.validate()
    return sample_background(
        point, grid,
        curvature=lambda r, t: background_curvature(point, r),
        log_h_fn=lambda r, t: log_h(point, r, t),
        alpha=lambda r, t: hermitian_exponent(point, r),
    )


def bradlow_margin(point: ModuliPoint | float) -> float:
    """Integral of g over Sigma, 2 pi (2 - E); a vortex exists iff it is positive."""
    e = point.energy if isinstance(point, ModuliPoint) else float(point)
    return TWO_PI * (TAU / 2.0 - e)


def degree_of_background(point: ModuliPoint, grid: Grid) -> float:
    """deg of the background connection by quadrature (exterior included)."""
    bg = kw_data(point, grid)
    inside = float(np.sum(bg.bg_curvature.values * grid.cell_volume))
    return (inside + bg.ext_integral(bg.ext_bg)) / TWO_PI


def gauge_shifted(point: ModuliPoint, grid: Grid, beta: Callable, lap_beta: Callable) -> BackgroundData:
    """Background of ``point`` after the Hermitian change alpha -> alpha + beta.

    ``beta`` and its positive Laplacian ``lap_beta`` are callables of rho.
    The vortex is unchanged, and the Kazdan-Warner solution moves from f to
    f + beta / 2, so a known solution of one background gives one of the other.
    """
    point.validate()
    return sample_background(
        point, grid,
        curvature=lambda r, t: background_curvature(point, r) - 0.5 * lap_beta(r),
        log_h_fn=lambda r, t: log_h(point, r, t) - beta(r),
        alpha=lambda r, t: hermitian_exponent(point, r) + beta(r),
    )
