"""Report fields and the invariant suite shared by the CLI and the tests."""

from __future__ import annotations

import cmath
import math
from dataclasses import asdict, dataclass

import numpy as np

from .background import BackgroundData, Family
from .geometry import TWO_PI
from .instanton import decay_fit, energy_density, expected_decay, holonomy_phase, ym_energy
from .kw_solver import SolverConfig, SolverReport
from .moduli import cell_diameter, divisor_locate, staticity_probe
from .vortex import (
    VortexField, degree, taubes_check, vortex_residual, weitzenbock_residual,
)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    bound: float
    passed: bool
    detail: str = ""


def format_complex(z: complex) -> str:
    if cmath.isinf(z):
        return "inf"
    return f"{z.real:.10g}{z.imag:+.10g}i"


def expected_static(point) -> bool:
    return point.at_infinity or point.z0 == 0


def summary(bg: BackgroundData, report: SolverReport, v: VortexField, mass: float = 1.0,
            window: tuple[float, float] = (20.0, 36.0)) -> dict:
    """Numbers reported for one solve; every value is finite or a string."""
    p = bg.point
    static, variation = staticity_probe(v)
    out = {
        "point": p.label(),
        "family": p.family.value,
        "E": p.energy,
        "z0": format_complex(p.z0) if p.z0 is not None else "inf",
        "converged": report.converged,
        "iterations": report.iterations,
        "method": report.method,
        "residual_sup": report.final_residual_sup,
        "residual_l2": report.final_residual_l2,
        "integral_laplacian": report.integral_laplacian,
        "f_mean": float(np.mean(report.f.values)),
        "f_max_abs": float(np.max(np.abs(report.f.values))),
        "degree": degree(v),
        "energy": ym_energy(v, mass),
        "taubes_max": taubes_check(v),
        "vortex_residual": vortex_residual(v),
        "weitzenbock_residual": weitzenbock_residual(v),
        "holonomy_phase": holonomy_phase(p.energy),
        "static": static,
        "t_variation": variation,
        "divisor": format_complex(divisor_locate(v)),
    }
    lo, hi = window
    if hi <= bg.grid.rho_max:
        out["decay_exponent"] = decay_fit(energy_density(v, mass), window)
        out["expected_decay"] = expected_decay(v)
    return out


def invariant_suite(bg: BackgroundData, report: SolverReport, v: VortexField,
                    cfg: SolverConfig | None = None,
                    window: tuple[float, float] = (20.0, 36.0)) -> list[Check]:
    cfg = cfg or SolverConfig()
    p, grid = bg.point, bg.grid
    e = p.energy
    checks = [
        Check("kw_residual", report.final_residual_sup, cfg.residual_tol,
              report.final_residual_sup <= cfg.residual_tol),
        Check("degree_preservation", abs(report.integral_laplacian), 1e-6 * TWO_PI,
              abs(report.integral_laplacian) <= 1e-6 * TWO_PI),
    ]
    vr = vortex_residual(v)
    checks.append(Check("vortex_equation", vr, 1e-8, vr <= 1e-8))
    d = degree(v)
    checks.append(Check("degree", abs(d - e), 1e-4, abs(d - e) <= 1e-4, f"degree {d:.10f}"))
    ym = ym_energy(v)
    checks.append(Check("energy", abs(ym - e), 1e-3, abs(ym - e) <= 1e-3, f"E_YM {ym:.10f}"))
    checks.append(Check("energy_window", ym, 2.0, 0.0 < ym < 2.0))
    tb = taubes_check(v)
    bound = 4.0 + 10.0 * grid.h**2
    checks.append(Check("taubes", tb, bound, tb <= bound))
    wz = weitzenbock_residual(v)
    checks.append(Check("weitzenbock", wz, 1e-6, wz <= 1e-6))
    static, variation = staticity_probe(v, cfg.residual_tol)
    checks.append(Check("staticity", variation, 10.0 * cfg.residual_tol,
                        static == expected_static(p), f"static={static}"))
    if p.family is Family.DIVISOR_AT and not p.at_infinity:
        z = divisor_locate(v)
        err, cell = abs(z - p.z0), cell_diameter(grid, p.z0)
        checks.append(Check("divisor", err, cell, err <= cell, f"estimate {format_complex(z)}"))
    if window[1] <= grid.rho_max:
        slope = decay_fit(energy_density(v), window)
        target = expected_decay(v)
        checks.append(Check("decay", abs(slope - target), 0.1, abs(slope - target) <= 0.1,
                            f"fitted {slope:.4f}, expected {target:g}"))
    return checks


def checks_to_dicts(checks: list[Check]) -> list[dict]:
    return [asdict(c) for c in checks]


def all_finite(obj) -> bool:
    """True when every float inside a nested dict/list structure is finite."""
    if isinstance(obj, float):
        return math.isfinite(obj)
    if isinstance(obj, dict):
        return all(all_finite(x) for x in obj.values())
    if isinstance(obj, (list, tuple)):
        return all(all_finite(x) for x in obj)
    return True
