import json
import math

import pytest

from swiptcap.cli import CSV_COLUMNS, fmt, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_fmt():
    assert fmt(1.0 / 3.0) == "0.333333333333"
    assert fmt(True) == "true"
    assert fmt(7) == "7"
    assert fmt(math.nan) == "nan"


def test_baseline(capsys):
    code, out, _ = run(capsys, "baseline", "--pa", "5", "--g", "0.01,0.01,0.01", "--rp", "4")
    assert code == 0
    assert "C = 1.2527629685" in out and "P_R = 0.56" in out and "Pd_max = 0.86" in out
    code, out, _ = run(capsys, "baseline", "--pa", "10")
    assert f"C = {fmt(math.log(6))}" in out
    code, out, _ = run(capsys, "baseline", "--pa", "5", "--pd", "0.8", "--ts-l", "2,8,32")
    rows = [line.split(",") for line in out.strip().splitlines() if line[:1].isdigit()]
    taus = [float(r[1]) for r in rows]
    assert taus[0] == pytest.approx(0.48, abs=1e-12)
    assert taus == sorted(taus, reverse=True)


def test_usage_errors(capsys):
    assert run(capsys, "solve", "rdp", "--pa", "5")[0] == 1
    assert run(capsys, "solve", "rdp", "--pa", "5", "--rp", "4", "--g", "1,x")[0] == 1
    assert run(capsys, "solve", "rdp", "--pa", "5", "--rp", "4", "--g", "1,1")[0] == 1
    with pytest.raises(SystemExit) as info:
        main(["nonsense"])
    assert info.value.code == 1


def test_solve_infeasible(capsys):
    code, _, err = run(capsys, "solve", "rdp", "--pa", "5", "--pd", "99", "--rp", "4", "--g", "0.01,0.01,0.01")
    assert code == 2
    assert "feasible_pd_max = 0.86" in err


def test_solve_writes_document_and_validates(capsys, tmp_path):
    out = tmp_path / "sol.json"
    code, text, _ = run(capsys, "solve", "rdp", "--pa", "5", "--pd", "0.86", "--rp", "4", "--out", str(out))
    assert code == 0
    assert "nats" in text and "bits" in text and "mu1" in text
    doc = json.loads(out.read_text())
    for key in ("problem", "points", "probs", "mi_nats", "multipliers", "kkt", "config", "version"):
        assert key in doc
    assert doc["kkt"]["passed"] is True
    assert doc["config"]["seed"] == 1
    assert set(doc["kkt"]) >= {"residual", "violation", "passed"}

    assert run(capsys, "validate", "--solution", str(out), "--mc-samples", "20000")[0] == 0

    doc["probs"] = [0.5, 0.5]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code, out_text, err = run(capsys, "validate", "--solution", str(bad), "--mc-samples", "20000")
    assert code == 4
    assert "[FAIL] kkt" in out_text
    assert "kkt" in err


def test_validate_default(capsys):
    code, out, _ = run(capsys, "validate", "--mc-samples", "20000")
    assert code == 0
    assert out.count("[PASS]") == 5


def test_mc_verb(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["mc", "--points", "0.5,2,3.5", "--probs", "0.3,0.5,0.2", "--mc-samples", "20000", "--seed", "7"]
    assert run(capsys, *args, "--al", "1", "--au", "4", "--out", str(a))[0] == 0
    assert run(capsys, *args, "--al", "1", "--au", "4", "--out", str(b))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    doc = json.loads(a.read_text())
    assert doc["rng"] == "Philox4x64"
    assert abs(doc["mi_nats"]["mc_mean"] - doc["mi_nats"]["quadrature"]) < 4 * doc["mi_nats"]["mc_std_error"]
    assert run(capsys, "mc", "--points", "1")[0] == 1


def test_sweep_csv(capsys, tmp_path):
    out = tmp_path / "sweep.csv"
    code, _, err = run(
        capsys, "sweep", "rdp", "--pa", "5", "--rp", "4", "--from", "0.7", "--to", "0.9", "--steps", "2",
        "--restarts", "4", "--out", str(out),
    )
    lines = out.read_text().splitlines()
    assert lines[0].split(",") == list(CSV_COLUMNS)
    first, second = (line.split(",") for line in lines[1:])
    assert first[6] == "true" and first[9] == "ok"
    assert first[8] == ""  # runtime only with --record-runtime
    assert second[9] == "infeasible" and second[6] == "false"
    assert "kkt_passed=false" in err
    assert code == 2
