"""Vortex construction of SU(2) instantons on Euclidean Schwarzschild space."""

from .background import BradlowError, Family, ModuliPoint, kw_data
from .geometry import DiscreteField, Grid, integrate, laplacian
from .instanton import decay_fit, energy_density, holonomy, reducible_energy, ym_energy
from .kw_solver import (
    SolverConfig, SolverReport, continuation_solve, monotone_solve, newton_solve, residual,
)
from .moduli import canonical_map, divisor_locate, staticity_probe, uhlenbeck_limit_probe
from .vortex import build_vortex, degree, taubes_check, ymh_energy

__all__ = [
    "BradlowError", "DiscreteField", "Family", "Grid", "ModuliPoint",
    "SolverConfig", "SolverReport", "build_vortex", "canonical_map", "continuation_solve",
    "decay_fit", "degree", "divisor_locate", "energy_density", "holonomy", "integrate",
    "kw_data", "laplacian", "monotone_solve", "newton_solve", "reducible_energy", "residual",
    "staticity_probe", "taubes_check", "uhlenbeck_limit_probe", "ym_energy", "ymh_energy",
]
