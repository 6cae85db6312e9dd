import csv
import json
import subprocess
import sys

import pytest

from mmbm.cli import cli_main

COMMON = {"q": [[-1, 1], [1, -1]], "mu": [-0.5, -0.5], "sigma": [1, 1], "a": [0, 0], "b": [1, 2]}
DIVIDEND = {"q": [[-1, 1], [1, -1]], "mu": [0.5, -0.5], "sigma": [1, 1], "a": [0, 0], "b": [1, 2]}


@pytest.fixture
def model_file(tmp_path):
    def make(raw, name="model.json"):
        p = tmp_path / name
        p.write_text(json.dumps(raw))
        return str(p)
    return make


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_validate_bad_row_sum(model_file, capsys):
    path = model_file(dict(COMMON, q=[[-1, 0.5], [1, -1]]))
    assert cli_main(["validate", path]) == 2
    err = _err(capsys)
    assert err["violations"][0]["code"] == "RowSumViolation"
    assert err["violations"][0]["location"] == {"row": 1}


def test_validate_ok(model_file, tmp_path):
    out = tmp_path / "v"
    assert cli_main(["validate", model_file(COMMON), "--out", str(out)]) == 0
    assert (out / "validation.json").exists() and (out / "manifest.json").exists()


def test_validate_simulation_only(model_file, capsys):
    raw = {"q": [[-1, 1], [1, -1]], "mu": [0, 0], "sigma": [0, 0], "a": [0, 0], "b": [1, 2]}
    assert cli_main(["validate", model_file(raw)]) == 2
    assert cli_main(["validate", model_file(raw), "--simulation-only"]) == 0


def test_unreadable_model(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert cli_main(["stationary", str(bad), "--out", str(tmp_path / "o")]) == 2


def test_decompose(model_file, tmp_path):
    out = tmp_path / "d"
    assert cli_main(["decompose", model_file(COMMON), "--out", str(out)]) == 0
    info = json.loads((out / "partition.json").read_text())
    assert info["breakpoints"] == [0.0, 1.0, 2.0]


def test_stationary_outputs_and_determinism(model_file, tmp_path):
    path = model_file(COMMON)
    outs = [tmp_path / "r1", tmp_path / "r2"]
    for out in outs:
        assert cli_main(["stationary", path, "--grid", "400", "--out", str(out)]) == 0
    for name in ("cdf.csv", "atoms.json", "diagnostics.json", "manifest.json"):
        assert (outs[0] / name).exists()
    first = (outs[0] / "cdf.csv").read_bytes()
    assert first == (outs[1] / "cdf.csv").read_bytes()
    assert b"\r\n" not in first
    rows = _rows(outs[0] / "cdf.csv")
    assert list(rows[0]) == ["state", "z", "cdf", "density"]
    manifest = json.loads((outs[0] / "manifest.json").read_text())
    assert manifest["subcommand"] == "stationary"
    assert len(manifest["input_sha256"]) == 64
    assert "cdf.csv" in manifest["outputs"]


def test_stationary_numerical_failure(model_file, capsys, tmp_path):
    raw = {"q": [[-1, 1], [1, -1]], "mu": [-1, 1], "sigma": [1, 1], "a": [0, 0], "b": [1, 1]}
    assert cli_main(["stationary", model_file(raw), "--out", str(tmp_path / "o")]) == 2
    assert "AllBarriersDegenerateWithKappaZero" in json.dumps(_err(capsys))


@pytest.mark.parametrize("kind, params, name", [
    ("common", {"mu": -0.5, "sigma": 1, "q12": 1, "q21": 1, "b1": 1, "b2": 2}, "cdf.csv"),
    ("regeneration", {"mu": -0.5, "sigma": 1, "q12": 1, "q21": 1, "b1": 1, "b2": 2}, "regen.csv"),
    ("nodiff1", {"mu1": -1, "sigma1": 0, "mu2": 0.5, "sigma2": 1, "q12": 1, "q21": 1, "b1": 1, "b2": 2}, "cdf.csv"),
    ("nodiff2", {"mu1": -2, "sigma1": 1, "mu2": 1, "sigma2": 0, "q12": 1, "q21": 1, "b1": 1, "b2": 2}, "cdf.csv"),
    ("single", {"mu": -1, "sigma": 1.4142135623730951, "a": 0, "b": 1}, "cdf.csv"),
    ("dividend", {"lam": 1, "delta": 0.5, "mu": [0.5, -0.5], "sigma": [1, 1], "b1": 1, "b2": 2}, "value.csv"),
])
def test_oracle(kind, params, name, tmp_path):
    out = tmp_path / kind
    assert cli_main(["oracle", kind, "--params", json.dumps(params), "--out", str(out)]) == 0
    assert (out / name).exists() and (out / "manifest.json").exists()


def test_oracle_sign_constraint(tmp_path, capsys):
    params = {"mu1": 1, "sigma1": 0, "mu2": 0.5, "sigma2": 1, "q12": 1, "q21": 1, "b1": 1, "b2": 2}
    assert cli_main(["oracle", "nodiff1", "--params", json.dumps(params), "--out", str(tmp_path / "o")]) == 2
    assert _err(capsys)["error"] == "SignConstraintViolated"


def test_oracle_bad_keys(tmp_path):
    assert cli_main(["oracle", "common", "--params", '{"x": 1}', "--out", str(tmp_path / "o")]) == 2


def test_regen(model_file, tmp_path):
    out = tmp_path / "g"
    assert cli_main(["regen", model_file(COMMON), "--out", str(out)]) == 0
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["eta"] == pytest.approx(0.08918126812746069, abs=1e-13)
    assert cli_main(["regen", model_file(COMMON), "--target", "2", "--out", str(out)]) == 2


def test_dividend(model_file, tmp_path, capsys):
    out = tmp_path / "v"
    assert cli_main(["dividend", model_file(DIVIDEND), "--delta", "0.5", "--out", str(out)]) == 0
    rows = _rows(out / "value.csv")
    assert list(rows[0]) == ["state", "z", "value", "derivative"]
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["boundary"]["passed"]
    assert cli_main(["dividend", model_file(DIVIDEND), "--out", str(tmp_path / "w")]) == 2
    assert cli_main(["dividend", model_file(dict(DIVIDEND, delta=0.5)), "--out", str(tmp_path / "w")]) == 0


def test_simulate_stationary_reproducible(model_file, tmp_path):
    path = model_file(COMMON)
    args = ["simulate", path, "--horizon", "200", "--burn-in", "10", "--reps", "2", "--seed", "3", "--grid", "101"]
    assert cli_main(args + ["--out", str(tmp_path / "s1"), "--threads", "1"]) == 0
    assert cli_main(args + ["--out", str(tmp_path / "s2"), "--threads", "2"]) == 0
    a = (tmp_path / "s1" / "cdf.csv").read_bytes()
    assert a == (tmp_path / "s2" / "cdf.csv").read_bytes()
    assert list(_rows(tmp_path / "s1" / "cdf.csv")[0]) == ["state", "z", "cdf", "stderr"]
    manifest = json.loads((tmp_path / "s1" / "manifest.json").read_text())
    assert manifest["seeds"]


def test_simulate_regen_too_few_cycles(model_file, tmp_path, capsys):
    args = ["simulate", model_file(COMMON), "--mode", "regen", "--horizon", "20", "--burn-in", "1",
            "--out", str(tmp_path / "r")]
    assert cli_main(args) == 2
    assert _err(capsys)["error"] == "TooFewCycles"


def test_simulate_dividend(model_file, tmp_path):
    args = ["simulate", model_file(DIVIDEND), "--mode", "dividend", "--delta", "0.5", "--reps", "50",
            "--z0", "0.5", "--j0", "1", "--out", str(tmp_path / "d")]
    assert cli_main(args) == 0
    rows = _rows(tmp_path / "d" / "value.csv")
    assert list(rows[0]) == ["state", "z", "value", "stderr", "ruin_fraction"]


def test_simulate_bad_config(model_file, tmp_path, capsys):
    args = ["simulate", model_file(COMMON), "--dt", "0.5", "--out", str(tmp_path / "x")]
    assert cli_main(args) == 2
    assert _err(capsys)["error"] == "ConfigInvalid"


def test_selftest_subset(tmp_path):
    assert cli_main(["selftest", "--only", "1", "7", "11", "--out", str(tmp_path / "t")]) == 0
    results = json.loads((tmp_path / "t" / "selftest.json").read_text())
    assert [r["number"] for r in results] == [1, 7, 11]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mmbm", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip()
