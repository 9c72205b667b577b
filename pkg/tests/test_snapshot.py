import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from esvortex import DiscreteField, Grid, ModuliPoint
from esvortex.snapshot import (
    _HEADER, VERSION, Snapshot, SnapshotError, decode, encode, read_snapshot, write_snapshot,
)

from conftest import SMALL_GRID

GRID = Grid(16, 8)

finite = st.floats(-1e6, 1e6, allow_nan=False)
points = st.one_of(
    st.floats(0.01, 1.99).map(ModuliPoint.divisor_free),
    st.tuples(st.complex_numbers(max_magnitude=100, allow_nan=False), st.floats(1.0, 1.99))
    .map(lambda a: ModuliPoint.divisor_at(*a)),
)


def _snap(point, values, ext, **kw):
    return Snapshot(point, GRID, DiscreteField(GRID, values), ext, **kw)


def test_header_size():
    assert _HEADER.size == 92


@settings(max_examples=40, deadline=None)
@given(points, arrays(np.float64, GRID.shape, elements=finite),
       arrays(np.float64, (GRID.n_ext,), elements=finite),
       st.booleans(), st.integers(0, 2**40), finite)
def test_round_trip_is_bit_exact(point, values, ext, conv, iters, res):
    snap = _snap(point, values, ext, converged=conv, iterations=iters, residual_sup=abs(res))
    back = decode(encode(snap))
    assert back.point == point and back.grid == GRID
    assert back.f.values.tobytes() == snap.f.values.tobytes()
    assert back.f_exterior.tobytes() == np.asarray(ext).tobytes()
    assert (back.converged, back.iterations, back.residual_sup) == (conv, iters, abs(res))


def test_file_round_trip_of_a_solve(tmp_path, cd_small):
    _, report, _ = cd_small
    path = write_snapshot(tmp_path / "cd.esvx", Snapshot.from_report(ModuliPoint.divisor_at(0, 1.0), report))
    back = read_snapshot(path).to_report()
    np.testing.assert_array_equal(back.f.values, report.f.values)
    np.testing.assert_array_equal(back.f_exterior, report.f_exterior)
    assert back.converged and back.final_residual_sup == report.final_residual_sup
    assert read_snapshot(path).grid == SMALL_GRID


def _bytes():
    return encode(_snap(ModuliPoint.divisor_free(0.5), np.zeros(GRID.shape), np.zeros(GRID.n_ext)))


def test_truncated_by_one_byte():
    with pytest.raises(SnapshotError, match="length"):
        decode(_bytes()[:-1])


def test_truncated_below_header():
    with pytest.raises(SnapshotError, match="truncated"):
        decode(_bytes()[:50])


def test_version_bump():
    data = bytearray(_bytes())
    data[4] = VERSION + 1
    with pytest.raises(SnapshotError, match="unsupported snapshot version"):
        decode(bytes(data))


def test_checksum_mismatch():
    data = bytearray(_bytes())
    data[200] ^= 0x01
    with pytest.raises(SnapshotError, match="checksum"):
        decode(bytes(data))


def test_bad_magic():
    with pytest.raises(SnapshotError, match="magic"):
        decode(b"NOPE" + _bytes()[4:])


def test_exterior_shape_checked():
    with pytest.raises(ValueError):
        encode(_snap(ModuliPoint.divisor_free(0.5), np.zeros(GRID.shape), np.zeros(3)))
