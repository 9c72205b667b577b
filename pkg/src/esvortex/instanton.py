"""Four-dimensional instanton observables recovered from a vortex on Sigma.

The curvature of the lifted connection D descends to Sigma as

    |F_D|^2 = (curv^2 + |nabla Phi|^2 + (4 - |Phi|^2)^2 / 4) / (16 m^4 (rho+1)^4)

and the Yang-Mills energy is (1/8 pi) times the integral of the numerator,
independent of the mass m.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .background import Family
from .geometry import DiscreteField
from .vortex import VortexField, energy_integrand, ymh_energy

DEFAULT_WINDOW = (20.0, 36.0)


@dataclass(frozen=True)
class InstantonObservables:
    mass: float
    energy: float
    curvature_density: DiscreteField
    decay_exponent: float
    holonomy_phase: float

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if np.any(self.curvature_density.values < 0):
            raise ValueError("curvature density must be non-negative")


def _check_mass(m: float) -> float:
    m = float(m)
    if not m > 0 or not math.isfinite(m):
        raise ValueError(f"mass must be a positive number, got {m!r}")
    return m


def energy_density(v: VortexField, m: float = 1.0) -> DiscreteField:
    """|F_D|^2 per cell of Sigma."""
    m = _check_mass(m)
    rho1 = v.grid.rho2d + 1.0
    num = np.maximum(energy_integrand(v), 0.0)
    return DiscreteField(v.grid, num / (16.0 * m**4 * rho1**4))


def ym_energy(v: VortexField, m: float = 1.0) -> float:
    """Yang-Mills energy (1/8 pi) * integral of the vortex energy integrand."""
    _check_mass(m)
    return ymh_energy(v) / 4.0


def decay_fit(density: DiscreteField, window: tuple[float, float] = DEFAULT_WINDOW) -> float:
    """Slope of log |F_D| against log(rho + 1) over ``window``.

    The density is averaged over t first; at least 10 radial samples are
    required and the window must start at rho >= 5.
    """
    lo, hi = map(float, window)
    grid = density.grid
    if lo < 5.0:
        raise ValueError("decay window must start at rho >= 5")
    if hi > grid.rho_max or hi <= lo:
        raise ValueError(f"decay window {window} does not fit inside rho <= {grid.rho_max}")
    sel = (grid.rho >= lo) & (grid.rho <= hi)
    if np.count_nonzero(sel) < 10:
        raise ValueError(f"decay window {window} holds fewer than 10 radial samples")
    prof = density.values[sel].mean(axis=1)
    if np.any(prof <= 0):
        raise ValueError("curvature density vanishes inside the window")
    x = np.log(grid.rho[sel] + 1.0)
    y = 0.5 * np.log(prof)
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def expected_decay(v: VortexField) -> float:
    """Decay exponent predicted for the family: -3 for E = 1 with a finite divisor."""
    p = v.point
    if p is not None and p.family is Family.DIVISOR_AT and not p.at_infinity and p.energy == 1.0:
        return -3.0
    return -2.0


def holonomy(energy: float) -> tuple[complex, complex]:
    """Eigenvalues of the holonomy around the circle at infinity."""
    e = float(energy)
    if not 0.0 < e < 2.0:
        raise ValueError("holonomy is defined for energies in (0, 2)")
    w = cmath.exp(2j * math.pi * e)
    return w, w.conjugate()


def holonomy_phase(energy: float) -> float:
    return float(energy) % 1.0


def reducible_energy(n: int) -> float:
    """Yang-Mills energy 2 n^2 of the reducible instanton of charge n."""
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise ValueError("n must be a non-negative integer")
    return 2.0 * int(n) ** 2


def observables(v: VortexField, m: float = 1.0,
                window: tuple[float, float] = DEFAULT_WINDOW) -> InstantonObservables:
    dens = energy_density(v, m)
    e = ym_energy(v, m)
    return InstantonObservables(
        mass=m,
        energy=e,
        curvature_density=dens,
        decay_exponent=decay_fit(dens, window),
        holonomy_phase=holonomy_phase(v.point.energy) if v.point is not None else 0.0,
    )
