import csv
import json
import math

import numpy as np
import pytest

from esvortex import DiscreteField
from esvortex.cli import EXIT_BAD_INPUT, EXIT_FAILED, EXIT_NOT_CONVERGED, EXIT_OK, main
from esvortex.snapshot import read_snapshot, write_snapshot

SMALL = ["--grid", "128x16"]


def _finite(obj):
    if isinstance(obj, float):
        return math.isfinite(obj)
    if isinstance(obj, dict):
        return all(_finite(v) for v in obj.values())
    if isinstance(obj, list):
        return all(_finite(v) for v in obj)
    return True


def _numbers(obj):
    if isinstance(obj, dict):
        return {k: _numbers(v) for k, v in obj.items() if k != "timings"}
    return obj


def test_solve_charap_duff(tmp_path, capsys):
    out = tmp_path / "cd"
    assert main(["solve", "family=divisor_at", "z0=0", "E=1", "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["energy"] == pytest.approx(1.0, abs=1e-3)
    assert report["degree"] == pytest.approx(1.0, abs=1e-3)
    assert report["residual_sup"] <= 1e-10
    assert report["f_mean"] == pytest.approx(0.6931, abs=1e-4)
    assert all(report["invariants"].values())
    assert _finite(report)
    assert (out / "snapshot.esvx").exists()


def test_solve_is_deterministic(tmp_path):
    runs = []
    for k in range(2):
        out = tmp_path / str(k)
        assert main(["solve", "E=0.75", "--out", str(out)] + SMALL) == EXIT_OK
        runs.append(_numbers(json.loads((out / "report.json").read_text())))
    runs[0].pop("snapshot"), runs[1].pop("snapshot")
    assert runs[0] == runs[1]


def test_verify_fresh_and_snapshot(tmp_path, capsys):
    out = tmp_path / "v"
    assert main(["solve", "family=divisor_at", "z0=2+i", "E=1", "--out", str(out)] + SMALL) == EXIT_OK
    capsys.readouterr()
    assert main(["verify", "--snapshot", str(out / "snapshot.esvx"), "--out", str(out)]) == EXIT_OK
    table = capsys.readouterr().out
    assert "PASS" in table and "FAIL" not in table
    payload = json.loads((out / "verify.json").read_text())
    assert payload["passed"] and _finite(payload)


def test_verify_corrupted_snapshot(tmp_path, capsys):
    out = tmp_path / "c"
    assert main(["solve", "E=0.5", "--out", str(out)] + SMALL) == EXIT_OK
    path = out / "snapshot.esvx"
    data = bytearray(path.read_bytes())
    data[120] ^= 0xFF
    path.write_bytes(bytes(data))
    capsys.readouterr()
    assert main(["verify", "--snapshot", str(path), "--out", str(out)]) == EXIT_BAD_INPUT
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "bad_snapshot" and "checksum" in err["detail"]


def test_verify_flags_a_broken_field(tmp_path):
    out = tmp_path / "b"
    assert main(["solve", "E=0.5", "--out", str(out)] + SMALL) == EXIT_OK
    path = out / "snapshot.esvx"
    snap = read_snapshot(path)
    bent = snap.__class__(**{**snap.__dict__, "f": DiscreteField(snap.grid, snap.f.values + 0.1)})
    write_snapshot(path, bent)
    assert main(["verify", "--snapshot", str(path), "--out", str(out)]) == EXIT_FAILED


def test_non_convergence_exit(tmp_path, capsys):
    code = main(["solve", "E=1.5", "solver.max_newton_iters=0", "solver.monotone_fallback=no",
                 "--out", str(tmp_path)] + SMALL)
    assert code == EXIT_NOT_CONVERGED
    assert json.loads(capsys.readouterr().err)["error"] == "not_converged"


def test_bad_config_exit(tmp_path, capsys):
    assert main(["solve", "E=2.0", "--out", str(tmp_path)]) == EXIT_BAD_INPUT
    err = json.loads(capsys.readouterr().err)
    assert err["key"] == "E" and "Bradlow" in err["detail"]


def _read_csv(path):
    with path.open(newline="") as fh:
        return list(csv.DictReader(fh))


def test_sweep_parallel_matches_serial(tmp_path):
    args = ["sweep", "family=divisor_free", "E=0.25..1.75 step 0.25"] + SMALL
    assert main(args + ["--out", str(tmp_path / "s"), "--threads", "1"]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "p"), "--threads", "2"]) == EXIT_OK
    serial = _read_csv(tmp_path / "s" / "sweep.csv")
    parallel = _read_csv(tmp_path / "p" / "sweep.csv")
    assert serial == parallel
    assert len(serial) == 7
    for row in serial:
        assert float(row["energy"]) == pytest.approx(float(row["E"]), abs=1e-3)
        assert row["divisor"] == "inf" and row["static"] == "True"
        assert all(math.isfinite(float(row[k])) for k in ("residual", "degree", "energy", "taubes_max"))


def test_sweep_records_failures_and_continues(tmp_path):
    args = ["sweep", "family=divisor_free", "E=0.5,1.5", "solver.max_newton_iters=2",
            "solver.monotone_fallback=no", "--out", str(tmp_path)] + SMALL
    assert main(args) == EXIT_NOT_CONVERGED
    rows = _read_csv(tmp_path / "sweep.csv")
    assert len(rows) == 2
    assert any(r["error"] == "not_converged" for r in rows)


def test_decay_command(tmp_path):
    assert main(["decay", "family=divisor_at", "z0=0", "E=1", "--out", str(tmp_path)]) == EXIT_OK
    payload = json.loads((tmp_path / "decay.json").read_text())
    assert payload["decay_exponent"] == pytest.approx(-3.0, abs=0.1)
    rows = _read_csv(tmp_path / "profile.csv")
    assert len(rows) == 512
    assert all(math.isfinite(float(r["log_F_D"])) for r in rows)


def test_limit_command(tmp_path):
    assert main(["limit", "E=1", "limit.ladder=2,4,8", "--out", str(tmp_path)] + ["--grid", "256x32"]) == EXIT_OK
    payload = json.loads((tmp_path / "limit.json").read_text())
    assert payload["strictly_decreasing"]
    assert len(_read_csv(tmp_path / "limit.csv")) == 3
    assert np.all(np.isfinite(payload["distances"]))
