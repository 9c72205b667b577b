"""Run configuration: a small key=value format with optional [sections].

Example::

    command = sweep
    family  = divisor_at
    E       = 1..1.75 step 0.25
    z0      = 0, 1, 2+i

    [grid]
    n_rho = 512
    n_t = 32
    rho_max = 40

    [solver]
    residual_tol = 1e-10

Several pairs may share a line (``family=divisor_at z0=0 E=1``) and any key
may be written dotted instead of inside a section (``grid.n_rho=256``).
Lines starting with ``#`` are comments.  Values:

* ``E`` is a number, a comma list, or an inclusive range ``a..b step s``;
* ``z0`` is a comma list of complex numbers such as ``2+i``, ``-1.5i`` or ``inf``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .background import BradlowError, Family, ModuliPoint
from .geometry import Grid
from .kw_solver import SolverConfig

COMMANDS = ("solve", "verify", "sweep", "decay", "limit")


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        if key == "e" or key.endswith(".e"):
            key = key[:-1] + "E"
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    command: str = "solve"
    points: tuple[ModuliPoint, ...] = ()
    grid: Grid = field(default_factory=lambda: Grid(512, 32, 40.0))
    solver: SolverConfig = field(default_factory=SolverConfig)
    out_dir: Path = Path("out")
    mass: float = 1.0
    threads: int = 1
    decay_window: tuple[float, float] = (20.0, 36.0)
    limit_ladder: tuple[complex, ...] = (2, 4, 8, 16)
    limit_window: float = 3.0
    snapshot: Path | None = None

    @property
    def point(self) -> ModuliPoint:
        return self.points[0]


_GRID_KEYS = {"n_rho": int, "n_t": int, "rho_max": float}
_SOLVER_KEYS = {f.name: f.type for f in fields(SolverConfig)}
_TOP_KEYS = {"command", "family", "e", "energy", "z0", "mass", "out", "threads", "snapshot"}
_SECTION_KEYS = {
    "grid": set(_GRID_KEYS),
    "solver": set(_SOLVER_KEYS),
    "sweep": {"family", "e", "energy", "z0"},
    "decay": {"window"},
    "limit": {"e", "energy", "ladder", "window"},
    "output": {"out"},
}
_PAIR = re.compile(r"([A-Za-z_][\w.]*)\s*=")


def _split_pairs(line: str, key_hint: str) -> list[tuple[str, str]]:
    matches = list(_PAIR.finditer(line))
    if not matches or matches[0].start() != 0:
        raise ConfigError(key_hint, f"expected key=value, got {line!r}")
    out = []
    for m, nxt in zip(matches, matches[1:] + [None]):
        end = nxt.start() if nxt else len(line)
        out.append((m.group(1), line[m.end():end].strip()))
    return out


def _tokens(text: str) -> list[tuple[str, str]]:
    """Flatten the text into (dotted key, raw value) pairs."""
    section = ""
    pairs = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"line {n}", f"malformed section header {raw!r}")
            section = line[1:-1].strip().lower()
            if section not in _SECTION_KEYS:
                raise ConfigError(section, "unknown section")
            continue
        for key, value in _split_pairs(line, f"line {n}"):
            key = key.lower()
            if "." not in key and section:
                key = f"{section}.{key}"
            pairs.append((key, value))
    return pairs


def parse_number(key: str, text: str, kind=float):
    try:
        if kind is int:
            return int(text)
        value = float(text)
    except ValueError:
        raise ConfigError(key, f"expected {kind.__name__}, got {text!r}") from None
    return value


def parse_bool(key: str, text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(key, f"expected a boolean, got {text!r}")


def parse_complex(key: str, text: str) -> complex:
    s = text.strip().replace(" ", "").lower()
    if s in ("inf", "infinity", "+inf"):
        return complex(math.inf, 0.0)
    s = re.sub(r"(?<![\d.])i", "1i", s).replace("i", "j")
    try:
        return complex(s)
    except ValueError:
        raise ConfigError(key, f"expected a complex number, got {text!r}") from None


def parse_energies(key: str, text: str) -> list[float]:
    m = re.fullmatch(r"\s*(\S+?)\s*\.\.\s*(\S+)\s+step\s+(\S+)\s*", text)
    if m:
        a, b, s = (parse_number(key, g) for g in m.groups())
        if not s > 0 or b < a:
            raise ConfigError(key, "range needs a <= b and a positive step")
        n = int(round((b - a) / s)) + 1
        if not math.isclose(a + (n - 1) * s, b, rel_tol=1e-9, abs_tol=1e-12):
            raise ConfigError(key, f"step {s:g} does not divide {a:g}..{b:g}")
        return [round(a + k * s, 12) for k in range(n)]
    return [parse_number(key, part) for part in text.split(",") if part.strip()]


def _parse_grid_dims(key: str, text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*[xX]\s*(\d+)\s*", text)
    if not m:
        raise ConfigError(key, f"expected NRxNT, got {text!r}")
    return int(m.group(1)), int(m.group(2))


def _coerce_solver(key: str, name: str, text: str):
    default = getattr(SolverConfig(), name)
    if isinstance(default, bool):
        return parse_bool(key, text)
    if isinstance(default, int):
        return parse_number(key, text, int)
    if isinstance(default, float):
        return parse_number(key, text)
    return text.strip()


def parse_config(text: str, overrides: dict | None = None,
                 extra: list[str] | None = None) -> RunConfig:
    """Parse configuration text into a validated ``RunConfig``.

    ``extra`` holds further ``key=value`` strings (top level unless dotted)
    and ``overrides`` may carry ``grid`` (``"NRxNT"``), ``rho_max``,
    ``threads`` and ``out`` from the command line; both win over the text.
    """
    values: dict[str, str] = {}
    for key, value in _tokens(text) + _tokens("\n".join(extra or [])):
        head, _, tail = key.partition(".")
        if tail:
            if head not in _SECTION_KEYS or tail not in _SECTION_KEYS[head]:
                raise ConfigError(key, "unknown key")
        elif key not in _TOP_KEYS:
            raise ConfigError(key, "unknown key")
        if key.endswith("energy"):
            key = key[: -len("energy")] + "e"
        values[key] = value

    overrides = overrides or {}
    command = (overrides.get("command") or values.get("command", "solve")).strip().lower()
    if command not in COMMANDS:
        raise ConfigError("command", f"expected one of {', '.join(COMMANDS)}")

    grid_kw = {"n_rho": 512, "n_t": 32, "rho_max": 40.0}
    for name, kind in _GRID_KEYS.items():
        if f"grid.{name}" in values:
            grid_kw[name] = parse_number(f"grid.{name}", values[f"grid.{name}"], kind)
    if overrides.get("grid"):
        grid_kw["n_rho"], grid_kw["n_t"] = _parse_grid_dims("--grid", overrides["grid"])
    if overrides.get("rho_max") is not None:
        grid_kw["rho_max"] = float(overrides["rho_max"])
    try:
        grid = Grid(**grid_kw)
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None

    solver_kw = {}
    for name in _SOLVER_KEYS:
        k = f"solver.{name}"
        if k in values:
            solver_kw[name] = _coerce_solver(k, name, values[k])
    try:
        solver = SolverConfig(**solver_kw)
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from None

    points = _points(values)
    if command == "limit":
        e_key = "limit.e" if "limit.e" in values else "e"
        energies = parse_energies(e_key, values.get(e_key, "1"))
        if len(energies) != 1:
            raise ConfigError(e_key, "the limit ladder takes a single energy")
        points = (_validated(ModuliPoint.divisor_at(math.inf, energies[0]), e_key),)

    kw = {}
    if "decay.window" in values:
        parts = values["decay.window"].split(",")
        if len(parts) != 2:
            raise ConfigError("decay.window", "expected lo, hi")
        lo, hi = (parse_number("decay.window", p) for p in parts)
        if not 5.0 <= lo < hi <= grid.rho_max:
            raise ConfigError("decay.window", f"need 5 <= lo < hi <= rho_max = {grid.rho_max:g}")
        kw["decay_window"] = (lo, hi)
    if "limit.ladder" in values:
        ladder = tuple(parse_complex("limit.ladder", p) for p in values["limit.ladder"].split(","))
        if not ladder:
            raise ConfigError("limit.ladder", "empty ladder")
        kw["limit_ladder"] = ladder
    if "limit.window" in values:
        kw["limit_window"] = parse_number("limit.window", values["limit.window"])
    if "mass" in values:
        kw["mass"] = parse_number("mass", values["mass"])
        if not kw["mass"] > 0:
            raise ConfigError("mass", "must be positive")
    threads = overrides.get("threads") or values.get("threads")
    if threads is not None:
        kw["threads"] = parse_number("threads", str(threads), int)
        if kw["threads"] < 1:
            raise ConfigError("threads", "must be at least 1")
    if overrides.get("snapshot"):
        values["snapshot"] = str(overrides["snapshot"])
    out = overrides.get("out") or values.get("out") or values.get("output.out")
    if out:
        kw["out_dir"] = Path(out)
    if "snapshot" in values:
        kw["snapshot"] = Path(values["snapshot"])
    if not points and not (command == "verify" and "snapshot" in kw):
        raise ConfigError("E", "no moduli points configured")
    if points and command not in ("sweep", "limit") and len(points) != 1:
        raise ConfigError("E", f"command {command!r} takes a single moduli point, got {len(points)}")
    return RunConfig(command=command, points=points, grid=grid, solver=solver, **kw)


def _validated(p: ModuliPoint, key: str) -> ModuliPoint:
    try:
        return p.validate()
    except BradlowError as exc:
        raise ConfigError(key, str(exc)) from None
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def _points(values: dict[str, str]) -> tuple[ModuliPoint, ...]:
    pre = "sweep." if any(k.startswith("sweep.") for k in values) else ""
    e_key = pre + "e" if pre + "e" in values else "e"
    z_key = pre + "z0" if pre + "z0" in values else "z0"
    f_key = pre + "family" if pre + "family" in values else "family"
    if e_key not in values:
        return ()
    energies = parse_energies(e_key, values[e_key])
    if f_key in values:
        try:
            family = Family(values[f_key].strip().lower())
        except ValueError:
            raise ConfigError(f_key, f"unknown family {values[f_key]!r}") from None
    else:
        family = Family.DIVISOR_AT if z_key in values else Family.DIVISOR_FREE
    if family is Family.DIVISOR_FREE:
        if z_key in values:
            raise ConfigError(z_key, "a divisor-free point carries no z0")
        return tuple(_validated(ModuliPoint.divisor_free(e), e_key) for e in energies)
    z0s = [parse_complex(z_key, p) for p in values.get(z_key, "0").split(",") if p.strip()]
    return tuple(_validated(ModuliPoint.divisor_at(z, e), e_key) for e in energies for z in z0s)


def load_config(path: str | Path, extra: list[str] | None = None,
                overrides: dict | None = None) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8") if path else ""
    return parse_config(text, overrides, extra)


def with_command(cfg: RunConfig, command: str) -> RunConfig:
    return replace(cfg, command=command)
