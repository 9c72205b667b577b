"""Solver for the Kazdan-Warner equation  Delta f = g - h e^{2f}  on Sigma.

The discretisation is finite-volume on the regularised grid, extended past
rho_max by the grid's axisymmetric exterior rings, which reach rho = inf
with zero flux there.  The extended problem is one symmetric system, so the
integral of Delta f over Sigma vanishes identically.

The unknown is the stacked vector (cells row-major, then exterior rings).
Equations are assembled in integrated form F(x) = area * residual, which
makes the Newton matrix symmetric positive definite.  Public functions that
take a field on the cells alone continue it into the exterior by solving the
exterior equations with the cells held fixed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import solve_banded

from .background import BackgroundData, BradlowError, ModuliPoint, bradlow_margin, kw_data
from .geometry import DiscreteField, Grid

log = logging.getLogger(__name__)

_EXP_CAP = 700.0


class ConvergenceError(RuntimeError):
    """Raised when a solve along a path exhausts its budget."""

    def __init__(self, message: str, report: "SolverReport | None" = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolverConfig:
    residual_tol: float = 1e-10
    max_newton_iters: int = 50
    damping: float = 0.5
    linear_tol: float = 1e-12
    monotone_fallback: bool = True
    linear_solver: str = "cg"
    max_linear_iters: int = 20000
    max_monotone_iters: int = 20000

    def __post_init__(self):
        if not (self.residual_tol > 0 and self.linear_tol > 0):
            raise ValueError("tolerances must be positive")
        if not 0.0 < self.damping < 1.0:
            raise ValueError("damping must lie in (0, 1)")
        if self.linear_solver not in ("cg", "direct"):
            raise ValueError("linear_solver must be 'cg' or 'direct'")
        if self.max_newton_iters < 0 or self.max_monotone_iters < 0:
            raise ValueError("iteration budgets must be non-negative")


@dataclass(frozen=True)
class SolverReport:
    converged: bool
    iterations: int
    final_residual_sup: float
    final_residual_l2: float
    integral_laplacian: float
    f: DiscreteField
    f_exterior: np.ndarray = field(repr=False)
    method: str = "newton"
    history: tuple[float, ...] = field(default=(), repr=False)
    max_increase: float = 0.0  # largest cellwise rise between monotone iterates
    rounding_floor: float = 0.0  # residual change caused by one ulp of f


# ---------------------------------------------------------------- evaluation

def _exp(x):
    return np.exp(np.minimum(x, _EXP_CAP))


def _stack(bg: BackgroundData, main: np.ndarray, ext: np.ndarray) -> np.ndarray:
    return np.concatenate([np.asarray(main, dtype=float).ravel(), np.asarray(ext, dtype=float)])


def _split(bg: BackgroundData, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = bg.grid.size
    return x[:n].reshape(bg.grid.shape), x[n:]


def _volumes(grid: Grid) -> np.ndarray:
    return np.concatenate([grid.cell_volume.ravel(), grid.ext_volume])


def _log_h(bg: BackgroundData) -> np.ndarray:
    return np.concatenate([bg.log_h.values.ravel(), bg.ext_log_h])


def _g(bg: BackgroundData) -> np.ndarray:
    return np.concatenate([bg.g.values.ravel(), bg.ext_g])


def _lap_integrated(bg: BackgroundData, x: np.ndarray) -> np.ndarray:
    m, e = bg.grid.apply_ext_stiffness(*_split(bg, x))
    return np.concatenate([m.ravel(), e])


def _pointwise_residual(bg: BackgroundData, x: np.ndarray) -> np.ndarray:
    vol = _volumes(bg.grid)
    return _lap_integrated(bg, x) / vol - _g(bg) + _exp(_log_h(bg) + 2.0 * x)


def _norms(bg: BackgroundData, r: np.ndarray) -> tuple[float, float]:
    if not np.all(np.isfinite(r)):
        return np.inf, np.inf
    return float(np.max(np.abs(r))), float(np.sqrt(np.sum(r**2 * _volumes(bg.grid))))


def exterior_continuation(bg: BackgroundData, f_main: np.ndarray,
                          init: np.ndarray | None = None) -> np.ndarray:
    """Values on the exterior rings solving the equation there, cells held fixed."""
    grid = bg.grid
    v = np.asarray(f_main, dtype=float).reshape(grid.shape)
    c_if, c_ext = grid._ext_stencil
    k = grid.n_ext
    vol = grid.ext_volume
    e = np.full(k, float(np.mean(v[-1]))) if init is None else np.array(init, dtype=float)
    # tridiagonal: the ring chain plus its coupling to the outermost cells
    diag0 = np.zeros(k)
    diag0[:-1] += c_ext
    diag0[1:] += c_ext
    diag0[0] += c_if * grid.n_t
    ab = np.zeros((3, k))
    ab[0, 1:] = -c_ext
    ab[2, :-1] = -c_ext
    for _ in range(100):
        _, lap = grid.apply_ext_stiffness(v, e)
        react = _exp(bg.ext_log_h + 2.0 * e)
        ab[1] = diag0 + 2.0 * vol * react
        step = solve_banded((1, 1), ab, -(lap + vol * (react - bg.ext_g)))
        e = e + step
        if np.max(np.abs(step)) <= 4.0 * np.finfo(float).eps * max(1.0, float(np.max(np.abs(e)))):
            break
    return e


def _full_state(bg: BackgroundData, f) -> np.ndarray:
    if isinstance(f, DiscreteField):
        main = f.values
    else:
        main = np.broadcast_to(np.asarray(f, dtype=float), bg.grid.shape)
    return _stack(bg, main, exterior_continuation(bg, main))


def apply_laplacian(f: DiscreteField, bg: BackgroundData | None = None,
                    f_exterior: np.ndarray | None = None) -> DiscreteField:
    """Discrete Delta f on the cells.

    Without ``bg`` the truncation face is homogeneous Neumann.  With ``bg``
    the cells couple to the exterior rings, whose values are ``f_exterior``
    or, if omitted, the exterior continuation of ``f``.
    """
    grid = f.grid
    if bg is None:
        return DiscreteField(grid, grid.apply_stiffness(f.values) / grid.cell_volume)
    ext = exterior_continuation(bg, f.values) if f_exterior is None else f_exterior
    m, _ = grid.apply_ext_stiffness(f.values, ext)
    return DiscreteField(grid, m / grid.cell_volume)


def exterior_laplacian(bg: BackgroundData, f: DiscreteField, f_exterior: np.ndarray) -> np.ndarray:
    """Discrete Delta f on the exterior rings."""
    _, e = bg.grid.apply_ext_stiffness(f.values, f_exterior)
    return e / bg.grid.ext_volume


def residual(bg: BackgroundData, f) -> tuple[float, float, DiscreteField]:
    """Cellwise Delta f - g + h e^{2f}: (sup, area-weighted L2, field on the cells).

    ``f`` lives on the cells; the exterior rings take its continuation, so
    their equations hold and the norms cover the cells alone.
    """
    grid = bg.grid
    r = _pointwise_residual(bg, _full_state(bg, f))[: grid.size]
    if np.all(np.isfinite(r)):
        sup = float(np.max(np.abs(r)))
        l2 = float(np.sqrt(np.sum(r**2 * grid.cell_volume.ravel())))
    else:
        sup = l2 = np.inf
        r = np.nan_to_num(r, nan=1e300, posinf=1e300, neginf=-1e300)
    return sup, l2, DiscreteField(grid, r)


def integral_laplacian(bg: BackgroundData, f: DiscreteField,
                       f_exterior: np.ndarray | None = None) -> float:
    """Integral of Delta f over Sigma, cells and exterior rings together."""
    ext = exterior_continuation(bg, f.values) if f_exterior is None else f_exterior
    m, e = bg.grid.apply_ext_stiffness(f.values, ext)
    return float(np.sum(m) + np.sum(e))


# ------------------------------------------------------------------ Newton

def _jacobian_diagonal(bg: BackgroundData, x: np.ndarray) -> np.ndarray:
    return bg.grid.ext_stiffness.diagonal() + 2.0 * _volumes(bg.grid) * _exp(_log_h(bg) + 2.0 * x)


def _jacobian(bg: BackgroundData, x: np.ndarray) -> sp.csr_matrix:
    react = 2.0 * _volumes(bg.grid) * _exp(_log_h(bg) + 2.0 * x)
    return (bg.grid.ext_stiffness + sp.diags(react)).tocsr()


def _rounding_floor(bg: BackgroundData, x: np.ndarray) -> float:
    """Largest change of a residual caused by one ulp of the unknown there."""
    return float(np.max(_jacobian_diagonal(bg, x) / _volumes(bg.grid) * np.spacing(np.abs(x))))


def _linear_solve(mat: sp.csr_matrix, rhs: np.ndarray, cfg: SolverConfig) -> np.ndarray:
    if cfg.linear_solver == "direct":
        return spla.spsolve(mat.tocsc(), rhs)
    d = mat.diagonal()
    precond = spla.LinearOperator(mat.shape, matvec=lambda y: y / d, dtype=float)
    sol, info = spla.cg(mat, rhs, rtol=cfg.linear_tol, atol=0.0,
                        maxiter=cfg.max_linear_iters, M=precond)
    if info != 0:
        log.warning("CG stopped short of tolerance (info=%d); using a direct solve", info)
        return spla.spsolve(mat.tocsc(), rhs)
    return sol


def _polish(bg: BackgroundData, x: np.ndarray, tol: float, sweeps: int = 8) -> np.ndarray:
    """Red-black pointwise Newton sweeps on a nearly converged state.

    Near rho_max one ulp of f moves a cell residual by ~1e-10 on the default
    grid, below what a global Newton step resolves.  Updating one colour at a
    time with round-to-nearest settles each cell to within about half that;
    the exterior rings are re-solved after every half sweep.
    """
    grid = bg.grid
    n = grid.size
    colour = (np.add.outer(np.arange(grid.n_rho), np.arange(grid.n_t)) % 2).ravel()
    vol = _volumes(grid)

    def sup_of(y):
        return _norms(bg, _pointwise_residual(bg, y))[0]

    best, best_sup = x, sup_of(x)
    cur = x.copy()
    for _ in range(sweeps):
        for c in (0, 1):
            step = -_pointwise_residual(bg, cur) * vol / _jacobian_diagonal(bg, cur)
            main = np.where(colour == c, cur[:n] + step[:n], cur[:n])
            cur = np.concatenate([main, exterior_continuation(bg, main, cur[n:])])
        sup = sup_of(cur)
        if not sup < best_sup:
            break
        best, best_sup = cur, sup
        if sup <= tol:
            break
    return best


def _check_bradlow(bg: BackgroundData):
    if bradlow_margin(bg.point) <= 0:
        raise BradlowError(
            f"{bg.point.label()}: Bradlow's condition fails (E must be < 2); refusing to solve"
        )


def _report(bg: BackgroundData, x: np.ndarray, iterations: int, method: str,
            history, tol: float, max_increase: float = 0.0) -> SolverReport:
    grid = bg.grid
    sup, l2 = _norms(bg, _pointwise_residual(bg, x))
    main, ext = _split(bg, x)
    m, e = grid.apply_ext_stiffness(main, ext)
    ext = np.array(ext)
    ext.setflags(write=False)
    return SolverReport(
        converged=bool(sup <= tol),
        iterations=iterations,
        final_residual_sup=sup,
        final_residual_l2=l2,
        integral_laplacian=float(np.sum(m) + np.sum(e)),
        f=DiscreteField(grid, main),
        f_exterior=ext,
        method=method,
        history=tuple(history),
        max_increase=max_increase,
        rounding_floor=_rounding_floor(bg, x),
    )


def _initial_state(bg: BackgroundData, init) -> np.ndarray:
    if init is None:
        return np.zeros(bg.grid.ext_size)
    if isinstance(init, SolverReport):
        if init.f.grid != bg.grid:
            return _full_state(bg, init.f)
        return _stack(bg, init.f.values, init.f_exterior)
    return _full_state(bg, init)


def newton_solve(bg: BackgroundData, cfg: SolverConfig | None = None,
                 init: DiscreteField | SolverReport | None = None) -> SolverReport:
    """Damped Newton iteration for the Kazdan-Warner equation.

    Each step solves (A + diag(2 area h e^{2f})) dx = -F(x) by Jacobi
    preconditioned CG; the step is shortened by ``cfg.damping`` until the
    residual sup-norm decreases.  When the budget runs out the report has
    ``converged=False``, unless the monotone fallback succeeds.
    """
    cfg = cfg or SolverConfig()
    _check_bradlow(bg)
    vol = _volumes(bg.grid)
    x = _initial_state(bg, init)
    r = _pointwise_residual(bg, x)
    sup = _norms(bg, r)[0]
    history = [sup]
    it = 0
    while sup > cfg.residual_tol and it < cfg.max_newton_iters:
        step = _linear_solve(_jacobian(bg, x), -r * vol, cfg)
        lam, accepted = 1.0, False
        while lam > 1e-6:
            trial = x + lam * step
            t_r = _pointwise_residual(bg, trial)
            t_sup = _norms(bg, t_r)[0]
            if t_sup < sup:
                accepted = True
                break
            lam *= cfg.damping
        it += 1
        if not accepted:
            log.info("%s: line search stalled at residual %.3e", bg.point.label(), sup)
            break
        x, r, sup = trial, t_r, t_sup
        history.append(sup)
    if cfg.residual_tol < sup < 1e3 * cfg.residual_tol:
        x = _polish(bg, x, cfg.residual_tol)
        history.append(_norms(bg, _pointwise_residual(bg, x))[0])
    report = _report(bg, x, it, "newton", history, cfg.residual_tol)
    if report.converged or not cfg.monotone_fallback:
        return report
    if report.final_residual_sup < 10.0 * max(report.rounding_floor, cfg.residual_tol):
        # stalled at the rounding floor: a monotone restart ends there too
        log.info("%s: residual %.3e is at the rounding floor %.3e", bg.point.label(),
                 report.final_residual_sup, report.rounding_floor)
        return report
    f_super = default_supersolution(bg)
    if f_super is None:
        return report
    log.info("%s: Newton failed, falling back to monotone iteration", bg.point.label())
    return monotone_solve(bg, cfg, f_super)


# ---------------------------------------------------------------- monotone

def _supersolution_state(bg: BackgroundData, f: DiscreteField) -> np.ndarray:
    # past rho_max: the larger of the outermost value and the flat gauge
    # log(2/h)/2 shifted to meet the outermost ring
    outer = f.values[-1]
    flat_outer = 0.5 * (np.log(2.0) - bg.log_h.values[-1])
    flat_ext = 0.5 * (np.log(2.0) - bg.ext_log_h) + float(np.min(outer - flat_outer))
    ext = np.maximum(float(np.max(outer)), flat_ext)
    return _stack(bg, f.values, ext)


def is_supersolution(bg: BackgroundData, f: DiscreteField, slack: float = 1e-12) -> bool:
    """Whether Delta f - g + h e^{2f} >= 0 on every cell and exterior ring.

    Past rho_max the field is continued by the larger of its outermost value
    and the flat-gauge profile log(2/h)/2 matched to it.
    """
    return bool(np.all(_pointwise_residual(bg, _supersolution_state(bg, f)) >= -slack))


def default_supersolution(bg: BackgroundData, margin: float = 0.5) -> DiscreteField | None:
    """A discrete supersolution when one is cheaply available.

    The candidate is the flat-gauge solution f = log(2/h)/2 (where
    |Phi|^2 = 4 everywhere), raised by ``margin`` until it qualifies.  It is
    singular at a divisor, so ``None`` is returned whenever h vanishes.
    """
    if np.min(bg.log_h.values) <= np.log(np.finfo(float).tiny) + 1:
        return None
    cand = DiscreteField(bg.grid, 0.5 * (np.log(2.0) - bg.log_h.values) + margin)
    for _ in range(8):
        if is_supersolution(bg, cand):
            return cand
        cand = DiscreteField(bg.grid, cand.values + margin)
    return None


MONOTONE_REFRESH = 20


def monotone_solve(bg: BackgroundData, cfg: SolverConfig | None,
                   f_super: DiscreteField) -> SolverReport:
    """Monotone iteration from a supersolution.

    Iterates (Delta + M) f_{k+1} = g - h e^{2 f_k} + M f_k with the cellwise
    bound M = 2 h e^{2 f_super}, starting from ``f_super`` (continued past
    rho_max as a constant).  Each iterate lies below the previous one, so
    M = 2 h e^{2 f_k} remains a valid bound for every later step; it is
    refreshed every ``MONOTONE_REFRESH`` iterations, which keeps a very large
    starting constant from freezing the iteration.  The shifted solve has a
    rounding floor of its own; if the iteration stalls above the tolerance,
    Newton steps from the last iterate finish the job.
    """
    cfg = cfg or SolverConfig()
    _check_bradlow(bg)
    grid = bg.grid
    if np.any(bg.h.values <= 0):
        raise ValueError("monotone iteration needs h > 0 at every cell")
    if not is_supersolution(bg, f_super):
        raise ValueError("initial field is not a discrete supersolution")

    vol = _volumes(grid)
    log_h = _log_h(bg)
    x = _supersolution_state(bg, f_super)

    def factor(state):
        s = 2.0 * vol * _exp(log_h + 2.0 * state)
        return s, spla.splu((grid.ext_stiffness + sp.diags(s)).tocsc())

    shift, lu = factor(x)
    g_int = vol * _g(bg)

    sup = _norms(bg, _pointwise_residual(bg, x))[0]
    history = [sup]
    max_increase = 0.0
    it = 0
    while sup > cfg.residual_tol and it < cfg.max_monotone_iters:
        new = lu.solve(shift * x - vol * _exp(log_h + 2.0 * x) + g_int)
        max_increase = max(max_increase, float(np.max(new - x)))
        stalled = np.array_equal(new, x)
        x = new
        it += 1
        if it % MONOTONE_REFRESH == 0 and not stalled:
            shift, lu = factor(x)
        if it % 10 == 0 or stalled:
            sup = _norms(bg, _pointwise_residual(bg, x))[0]
            history.append(sup)
            if stalled or (len(history) > 20 and sup < 1e2 * cfg.residual_tol
                           and sup >= history[-20]):
                break
    method = "monotone"
    if sup > cfg.residual_tol:
        fin = newton_solve(bg, replace(cfg, monotone_fallback=False),
                           _report(bg, x, it, method, history, cfg.residual_tol))
        x = _stack(bg, fin.f.values, fin.f_exterior)
        it += fin.iterations
        method = "monotone+newton"
        history.extend(fin.history[1:])
    return _report(bg, x, it, method, history, cfg.residual_tol, max_increase)


# ------------------------------------------------------------ conveniences

def solve(point: ModuliPoint, grid: Grid, cfg: SolverConfig | None = None,
          init: DiscreteField | SolverReport | None = None) -> tuple[BackgroundData, SolverReport]:
    bg = kw_data(point, grid)
    return bg, newton_solve(bg, cfg, init)


def continuation_solve(points: Sequence[ModuliPoint], grid: Grid,
                       cfg: SolverConfig | None = None,
                       init: DiscreteField | SolverReport | None = None) -> list[SolverReport]:
    """Solve along a path of moduli points, warm-starting each from the last."""
    if not points:
        return []
    fam = points[0].family
    if any(p.family is not fam for p in points):
        raise ValueError("continuation points must share a family")
    reports: list[SolverReport] = []
    prev = init
    for k, p in enumerate(points):
        try:
            bg = kw_data(p, grid)
            rep = newton_solve(bg, cfg, prev)
        except (BradlowError, ValueError) as exc:
            raise type(exc)(f"continuation step {k} ({p.label()}): {exc}") from exc
        if not rep.converged:
            raise ConvergenceError(f"continuation step {k} ({p.label()}) did not converge", rep)
        reports.append(rep)
        prev = rep
    return reports
