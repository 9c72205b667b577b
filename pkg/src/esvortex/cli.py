"""Command line front end: ``esvortex solve|verify|sweep|decay|limit``.

Examples::

    esvortex solve family=divisor_at z0=0 E=1 --out out/cd
    esvortex verify --snapshot out/cd/snapshot.esvx
    esvortex sweep --config sweep.cfg --threads 4
    esvortex decay family=divisor_free E=0.5
    esvortex limit E=1 --grid 256x32

Exit status: 0 success, 1 failed invariant, 2 non-convergence, 3 bad input.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .analysis import all_finite, checks_to_dicts, format_complex, invariant_suite, summary
from .background import kw_data
from .config import COMMANDS, ConfigError, RunConfig, load_config
from .instanton import energy_density
from .kw_solver import newton_solve
from .moduli import uhlenbeck_limit_probe
from .snapshot import Snapshot, SnapshotError, read_snapshot, write_snapshot
from .vortex import build_vortex

EXIT_OK, EXIT_FAILED, EXIT_NOT_CONVERGED, EXIT_BAD_INPUT = 0, 1, 2, 3

SWEEP_COLUMNS = [
    "family", "E", "z0", "converged", "iterations", "residual", "degree", "energy",
    "decay_exponent", "divisor", "static", "t_variation", "taubes_max", "error",
]


def _slug(label: str) -> str:
    return "".join(c if c.isalnum() or c in "+-." else "_" for c in label)


def _write_json(path: Path, payload: dict) -> None:
    if not all_finite(payload):
        raise ValueError(f"non-finite number in {path.name}")
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _solve_one(cfg: RunConfig, point):
    t0 = time.perf_counter()
    bg = kw_data(point, cfg.grid)
    report = newton_solve(bg, cfg.solver)
    return bg, report, time.perf_counter() - t0


def _not_converged(report, point) -> dict:
    return {
        "error": "not_converged",
        "point": point.label(),
        "iterations": report.iterations,
        "residual_sup": report.final_residual_sup,
        "method": report.method,
    }


def cmd_solve(cfg: RunConfig) -> int:
    point = cfg.point
    bg, report, elapsed = _solve_one(cfg, point)
    if not report.converged:
        print(json.dumps(_not_converged(report, point)), file=sys.stderr)
        return EXIT_NOT_CONVERGED
    v = build_vortex(bg, report)
    t0 = time.perf_counter()
    payload = summary(bg, report, v, cfg.mass, cfg.decay_window)
    checks = invariant_suite(bg, report, v, cfg.solver, cfg.decay_window)
    payload["invariants"] = {c.name: c.passed for c in checks}
    payload["timings"] = {"solve_s": elapsed, "observables_s": time.perf_counter() - t0}
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    snap = write_snapshot(cfg.out_dir / "snapshot.esvx", Snapshot.from_report(point, report))
    payload["snapshot"] = str(snap)
    _write_json(cfg.out_dir / "report.json", payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_verify(cfg: RunConfig) -> int:
    if cfg.snapshot is not None:
        try:
            snap = read_snapshot(cfg.snapshot)
        except (OSError, SnapshotError) as exc:
            print(json.dumps({"error": "bad_snapshot", "path": str(cfg.snapshot),
                              "detail": str(exc)}), file=sys.stderr)
            return EXIT_BAD_INPUT
        point, bg = snap.point, kw_data(snap.point, snap.grid)
        report = snap.to_report()
    else:
        point = cfg.point
        bg, report, _ = _solve_one(cfg, point)
    if not report.converged:
        print(json.dumps(_not_converged(report, point)), file=sys.stderr)
        return EXIT_NOT_CONVERGED
    v = build_vortex(bg, report)
    window = cfg.decay_window if cfg.decay_window[1] <= bg.grid.rho_max else (0.0, math.inf)
    checks = invariant_suite(bg, report, v, cfg.solver, window)
    width = max(len(c.name) for c in checks)
    print(f"verify {point.label()} on {bg.grid.n_rho}x{bg.grid.n_t}, rho_max={bg.grid.rho_max:g}")
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"  {c.name:<{width}}  {status}  {c.value:.3e}  (bound {c.bound:.3e})  {c.detail}")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out_dir / "verify.json",
                {"point": point.label(), "checks": checks_to_dicts(checks),
                 "passed": all(c.passed for c in checks)})
    return EXIT_OK if all(c.passed for c in checks) else EXIT_FAILED


def sweep_row(args) -> dict:
    """Solve one point and return its CSV row; failures become an error entry."""
    point, grid, solver, mass, window = args
    row = {k: "" for k in SWEEP_COLUMNS}
    row.update(family=point.family.value, E=point.energy,
               z0=format_complex(point.z0) if point.z0 is not None else "")
    try:
        bg = kw_data(point, grid)
        report = newton_solve(bg, solver)
        row.update(converged=report.converged, iterations=report.iterations,
                   residual=report.final_residual_sup)
        if not report.converged:
            row["error"] = "not_converged"
            return row
        s = summary(bg, report, build_vortex(bg, report), mass, window)
        row.update(degree=s["degree"], energy=s["energy"], decay_exponent=s.get("decay_exponent", ""),
                   divisor=s["divisor"], static=s["static"], t_variation=s["t_variation"],
                   taubes_max=s["taubes_max"])
    except Exception as exc:  # recorded per point; the sweep continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _row_key(row: dict):
    z = row["z0"]
    return (row["family"], float(row["E"]), z)


def run_sweep(cfg: RunConfig) -> list[dict]:
    jobs = [(p, cfg.grid, cfg.solver, cfg.mass, cfg.decay_window) for p in cfg.points]
    if cfg.threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(sweep_row, jobs))
    else:
        rows = [sweep_row(j) for j in jobs]
    return sorted(rows, key=_row_key)


def cmd_sweep(cfg: RunConfig) -> int:
    rows = run_sweep(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.out_dir / "sweep.csv"
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    failed = [r for r in rows if r["error"]]
    print(f"wrote {len(rows)} rows to {path} ({len(failed)} failed)")
    return EXIT_OK if not failed else EXIT_NOT_CONVERGED


def cmd_decay(cfg: RunConfig) -> int:
    point = cfg.point
    bg, report, _ = _solve_one(cfg, point)
    if not report.converged:
        print(json.dumps(_not_converged(report, point)), file=sys.stderr)
        return EXIT_NOT_CONVERGED
    v = build_vortex(bg, report)
    s = summary(bg, report, v, cfg.mass, cfg.decay_window)
    dens = energy_density(v, cfg.mass).values.mean(axis=1)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    with (cfg.out_dir / "profile.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rho", "log_rho1", "phi_sq", "curv", "log_F_D"])
        grid = bg.grid
        for i in range(grid.n_rho):
            writer.writerow([grid.rho[i], math.log1p(grid.rho[i]), v.phi_sq.values[i].mean(),
                             v.curv.values[i].mean(), 0.5 * math.log(max(dens[i], 1e-300))])
    payload = {"point": point.label(), "window": list(cfg.decay_window),
               "decay_exponent": s.get("decay_exponent"), "expected_decay": s.get("expected_decay")}
    _write_json(cfg.out_dir / "decay.json", payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_limit(cfg: RunConfig) -> int:
    energy = cfg.point.energy
    dists = uhlenbeck_limit_probe(energy, cfg.limit_ladder, cfg.grid, cfg.limit_window)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    with (cfg.out_dir / "limit.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["z0", "distance"])
        for z, d in zip(cfg.limit_ladder, dists):
            writer.writerow([format_complex(complex(z)), d])
    decreasing = bool(np.all(np.diff(dists) < 0))
    payload = {"E": energy, "window_rho_max": cfg.limit_window,
               "z0": [format_complex(complex(z)) for z in cfg.limit_ladder],
               "distances": dists, "strictly_decreasing": decreasing}
    _write_json(cfg.out_dir / "limit.json", payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


HANDLERS = {"solve": cmd_solve, "verify": cmd_verify, "sweep": cmd_sweep,
            "decay": cmd_decay, "limit": cmd_limit}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="esvortex", description=__doc__.split("\n")[0],
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("settings", nargs="*", metavar="KEY=VALUE",
                    help="configuration entries, applied after --config")
    ap.add_argument("--config", type=Path, help="key=value configuration file")
    ap.add_argument("--out", type=Path, help="output directory (default: out)")
    ap.add_argument("--threads", type=int, help="worker processes for sweep")
    ap.add_argument("--grid", metavar="NRxNT", help="grid size, e.g. 512x32")
    ap.add_argument("--rho-max", type=float, help="radial truncation")
    ap.add_argument("--snapshot", type=Path, help="snapshot to verify instead of solving")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"command": args.command, "grid": args.grid, "rho_max": args.rho_max,
                 "threads": args.threads, "out": args.out, "snapshot": args.snapshot}
    try:
        cfg = load_config(args.config, args.settings, overrides)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "key": exc.key, "detail": str(exc)}), file=sys.stderr)
        return EXIT_BAD_INPUT
    except OSError as exc:
        print(json.dumps({"error": "config", "detail": str(exc)}), file=sys.stderr)
        return EXIT_BAD_INPUT
    return HANDLERS[cfg.command](cfg)


if __name__ == "__main__":
    sys.exit(main())
