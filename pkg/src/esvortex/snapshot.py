"""Binary snapshots of converged solves.

Layout (little endian)::

    offset  type      field
    0       4s        magic b"ESVX"
    4       u16       format version (1)
    6       u16       flags: bit 0 = converged
    8       u32 x 3   n_rho, n_t, n_ext
    20      f64       rho_max
    28      u8        family (0 divisor free, 1 divisor at z0)
    29      7 pad
    36      f64 x 3   energy, Re z0, Im z0 (0, 0 for divisor free)
    60      u64       iterations
    68      f64 x 3   residual sup, residual l2, integral of Delta f
    92      f64 x n_rho*n_t   f on the cells, row-major
            f64 x n_ext       f on the exterior rings
    end-4   u32       CRC32 of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .background import Family, ModuliPoint
from .geometry import DiscreteField, Grid
from .kw_solver import SolverReport

MAGIC = b"ESVX"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIIdB7xdddQddd")
_CRC = struct.Struct("<I")
_FAMILY_CODE = {Family.DIVISOR_FREE: 0, Family.DIVISOR_AT: 1}


class SnapshotError(ValueError):
    """Unreadable snapshot: bad magic, unsupported version, truncation or checksum."""


@dataclass(frozen=True)
class Snapshot:
    point: ModuliPoint
    grid: Grid
    f: DiscreteField
    f_exterior: np.ndarray = field(repr=False)
    converged: bool = True
    iterations: int = 0
    residual_sup: float = 0.0
    residual_l2: float = 0.0
    integral_laplacian: float = 0.0
    version: int = VERSION

    @classmethod
    def from_report(cls, point: ModuliPoint, report: SolverReport) -> "Snapshot":
        return cls(point, report.f.grid, report.f, np.asarray(report.f_exterior),
                   report.converged, report.iterations, report.final_residual_sup,
                   report.final_residual_l2, report.integral_laplacian)

    def to_report(self) -> SolverReport:
        return SolverReport(
            converged=self.converged,
            iterations=self.iterations,
            final_residual_sup=self.residual_sup,
            final_residual_l2=self.residual_l2,
            integral_laplacian=self.integral_laplacian,
            f=self.f,
            f_exterior=self.f_exterior,
            method="snapshot",
        )


def encode(snap: Snapshot) -> bytes:
    grid, p = snap.grid, snap.point
    z0 = complex(p.z0) if p.z0 is not None else 0j
    ext = np.ascontiguousarray(snap.f_exterior, dtype="<f8")
    if ext.shape != (grid.n_ext,):
        raise ValueError(f"exterior field has shape {ext.shape}, grid expects ({grid.n_ext},)")
    head = _HEADER.pack(
        MAGIC, snap.version, int(bool(snap.converged)),
        grid.n_rho, grid.n_t, grid.n_ext, grid.rho_max,
        _FAMILY_CODE[p.family], p.energy, z0.real, z0.imag,
        int(snap.iterations), snap.residual_sup, snap.residual_l2, snap.integral_laplacian,
    )
    body = head + np.ascontiguousarray(snap.f.values, dtype="<f8").tobytes() + ext.tobytes()
    return body + _CRC.pack(zlib.crc32(body))


def decode(data: bytes) -> Snapshot:
    if len(data) < _HEADER.size + _CRC.size:
        raise SnapshotError(f"truncated snapshot: {len(data)} bytes is shorter than the header")
    (magic, version, flags, n_rho, n_t, n_ext, rho_max, fam, energy, zr, zi,
     iters, r_sup, r_l2, lap) = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise SnapshotError(f"not a snapshot (magic {magic!r})")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version} (this reader handles {VERSION})")
    n_cells = n_rho * n_t
    expected = _HEADER.size + 8 * (n_cells + n_ext) + _CRC.size
    if len(data) != expected:
        raise SnapshotError(f"snapshot length {len(data)} does not match the {expected} bytes its header implies")
    body, (crc,) = data[:-_CRC.size], _CRC.unpack_from(data, len(data) - _CRC.size)
    if zlib.crc32(body) != crc:
        raise SnapshotError("snapshot checksum mismatch")
    grid = Grid(n_rho, n_t, rho_max)
    if grid.n_ext != n_ext:
        raise SnapshotError(f"exterior ring count {n_ext} disagrees with the grid ({grid.n_ext})")
    if fam == 0:
        point = ModuliPoint.divisor_free(energy)
    elif fam == 1:
        point = ModuliPoint.divisor_at(complex(zr, zi), energy)
    else:
        raise SnapshotError(f"unknown family code {fam}")
    vals = np.frombuffer(data, dtype="<f8", count=n_cells, offset=_HEADER.size)
    ext = np.frombuffer(data, dtype="<f8", count=n_ext, offset=_HEADER.size + 8 * n_cells)
    return Snapshot(
        point=point, grid=grid,
        f=DiscreteField(grid, vals.astype(float).reshape(n_rho, n_t)),
        f_exterior=ext.astype(float),
        converged=bool(flags & 1), iterations=int(iters),
        residual_sup=r_sup, residual_l2=r_l2, integral_laplacian=lap, version=version,
    )


def write_snapshot(path: str | Path, snap: Snapshot) -> Path:
    path = Path(path)
    path.write_bytes(encode(snap))
    return path


def read_snapshot(path: str | Path) -> Snapshot:
    return decode(Path(path).read_bytes())
