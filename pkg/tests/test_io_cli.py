import json
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from paulizero import io
from paulizero.cli import OUT_ENV, resolve_config, run_command

# ---------------------------------------------------------------------------
# serialization


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_round_trip(x):
    text = io.format_float(x)
    assert float(text) == x
    assert json.loads(io.dumps({"x": x}))["x"] == x
    assert isinstance(json.loads(text), float)


def test_dumps_sorted_and_typed():
    from fractions import Fraction
    text = io.dumps({"b": np.float64(1.0), "a": [np.int64(2), Fraction(1, 3)], "c": np.array([0.1])})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    doc = json.loads(text)
    assert doc == {"a": [2, "1/3"], "b": 1.0, "c": [0.1]}
    assert '"b": 1.0' in text
    with pytest.raises(TypeError):
        io.dumps({"x": object()})


def test_csv_header_and_round_trip(tmp_path):
    path = io.write_csv(tmp_path / "t.csv", ["r", "ok"], [(0.1, True), (2.0, False)],
                        {"command": "x", "h": 0.5}, "x")
    comments, cols, rows = io.read_csv(path)
    assert comments[0] == "schema_version: 1"
    assert comments[1] == "command: x"
    assert json.loads(comments[2][len("config: "):]) == {"command": "x", "h": 0.5}
    assert cols == ["r", "ok"]
    assert rows == [["0.10000000000000001", "true"], ["2.0", "false"]]


def test_minimizer_dump_round_trip(tmp_path):
    arr = np.random.default_rng(0).normal(size=(4, 4, 4, 2)) * (1 + 2j)
    io.save_minimizer(tmp_path / "m.bin", arr, {"note": "x"})
    back, header = io.load_minimizer(tmp_path / "m.bin")
    np.testing.assert_array_equal(back, arr)
    assert header["shape"] == [4, 4, 4, 2] and header["note"] == "x"
    (tmp_path / "bad.bin").write_bytes(b"nope")
    with pytest.raises(ValueError):
        io.load_minimizer(tmp_path / "bad.bin")


# ---------------------------------------------------------------------------
# command line


@pytest.fixture(autouse=True)
def _no_env_out(monkeypatch):
    monkeypatch.delenv(OUT_ENV, raising=False)


def _run(tmp_path, *argv):
    return run_command([*argv, "--out", str(tmp_path)])


def test_bootstrap_command_prints_table(tmp_path, capsys):
    assert _run(tmp_path, "bootstrap", "--p", "6", "--alpha", "1/2") == 0
    out = capsys.readouterr().out
    assert "7 steps" in out
    assert "   7        4" in out
    comments, cols, rows = io.read_csv(tmp_path / "bootstrap.csv")
    assert cols == ["step", "epsilon", "epsilon_decimal"]
    assert [r[1] for r in rows] == ["1/2", "1", "3/2", "2", "5/2", "3", "7/2", "4"]


def test_bootstrap_bad_p_is_usage_error(tmp_path):
    assert _run(tmp_path, "bootstrap", "--p", "1") == 2
    assert _run(tmp_path, "bootstrap", "--p", "six") == 2


def test_argparse_errors_exit_two(tmp_path):
    assert run_command(["nonsense"]) == 2
    assert _run(tmp_path, "quotient", "--h", "abc") == 2
    assert _run(tmp_path, "quotient", "--coupling", "other") == 2


def test_missing_field_file_writes_nothing(tmp_path):
    out = tmp_path / "out"
    assert run_command(["quotient", "--field", str(tmp_path / "nope.json"), "--out", str(out)]) == 2
    assert not out.exists()


def test_invalid_grid_is_usage_error(tmp_path):
    assert _run(tmp_path, "quotient", "--h", "0.3", "--L", "1") == 2
    assert _run(tmp_path, "quotient", "--h", "-1") == 2


def test_quotient_artifact_schema(tmp_path):
    code = _run(tmp_path, "quotient", "--field", "loss-yau-derived", "--h", "0.5", "--L", "2",
                "--dump-minimizer")
    assert code == 0
    doc = json.loads((tmp_path / "quotient.json").read_text())
    assert doc["schema_version"] == 1 and doc["command"] == "quotient"
    assert doc["grid"] == {"h": 0.5, "L": 2.0, "n": 8}
    assert doc["delta_surrogate"] == doc["lambda_min"] / (1 + doc["lambda_min"])
    assert doc["config"]["field"] == "loss-yau-derived"
    assert "out" not in doc["config"]
    arr, header = io.load_minimizer(tmp_path / "minimizer.bin")
    assert arr.shape == (8, 8, 8, 2)
    assert header["config"] == doc["config"]


def test_quotient_output_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert run_command(["quotient", "--h", "0.5", "--L", "2", "--threads", "1", "--out", str(d)]) == 0
    assert (a / "quotient.json").read_bytes() == (b / "quotient.json").read_bytes()


def test_config_file_overrides_flags(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"h": 0.5, "L": 2.0}))
    c = resolve_config(["quotient", "--h", "0.25", "--config", str(cfg)])
    assert c.h == 0.5 and c.L == 2.0
    cfg.write_text(json.dumps({"grid_spacing": 0.5}))
    assert _run(tmp_path, "quotient", "--config", str(cfg)) == 2
    cfg.write_text("{not json")
    assert _run(tmp_path, "quotient", "--config", str(cfg)) == 2
    assert _run(tmp_path, "quotient", "--config", str(tmp_path / "missing.json")) == 2


def test_env_var_sets_output_directory(tmp_path, monkeypatch):
    target = tmp_path / "env"
    monkeypatch.setenv(OUT_ENV, str(target))
    assert run_command(["bootstrap", "--out", str(tmp_path / "flag")]) == 0
    assert (target / "bootstrap.csv").exists()
    assert not (tmp_path / "flag").exists()


def test_verify_exit_codes(tmp_path):
    args = ("verify", "--field", "loss-yau-derived", "--h", "0.5", "--L", "4")
    assert _run(tmp_path, *args) == 0
    r = json.loads((tmp_path / "verify.json").read_text())["zero_mode_residual"]
    assert _run(tmp_path, *args, "--residual-tol", str(r * 2)) == 0
    assert _run(tmp_path, *args, "--residual-tol", str(r / 2)) == 1
    assert json.loads((tmp_path / "verify.json").read_text())["passed"] is False
    # a field without a spinor cannot be verified
    assert _run(tmp_path, "verify", "--h", "0.5", "--L", "4") == 2


def test_field_command_reports_violation(tmp_path):
    doc = {"label": "mislabelled", "kind": "builtin", "params": {"name": "gaussian-swirl"},
           "decay": {"C_B": 1e-9, "beta": 1.0, "r0": 1.0}}
    path = tmp_path / "f.json"
    path.write_text(json.dumps(doc))
    assert _run(tmp_path, "field", "--field", str(path)) == 1
    out = json.loads((tmp_path / "field.json").read_text())
    assert out["decay_report"]["passed"] is False
    assert _run(tmp_path, "field") == 0


def test_gauge_command(tmp_path):
    code = _run(tmp_path, "gauge", "--n-radii", "3", "--n-directions", "2", "--angular-degree", "23")
    assert code == 0
    comments, cols, rows = io.read_csv(tmp_path / "gauge.csv")
    assert cols == ["r", "direction_index", "abs_A", "envelope", "pass"]
    assert len(rows) == 6 and all(r[-1] == "true" for r in rows)
    doc = json.loads((tmp_path / "gauge.json").read_text())
    assert doc["all_within_envelope"] is True
    assert doc["constants"]["kernel_prefactor"] == 4 * np.pi


def test_decay_command(tmp_path):
    code = _run(tmp_path, "decay", "--field", "loss-yau-derived", "--kappa-max", "2",
                "--r-start", "5", "--r-end", "40", "--n-radii", "6")
    assert code == 0
    doc = json.loads((tmp_path / "decay.json").read_text())
    assert doc["direct_fit"]["plus"]["exponent"] == pytest.approx(2.0, abs=0.1)
    assert doc["ode_fit"]["plus"] == pytest.approx(doc["direct_fit"]["plus"]["exponent"], abs=1e-6)
    _, cols, rows = io.read_csv(tmp_path / "decay.csv")
    assert len(rows) == 6
    assert _run(tmp_path, "decay", "--field", "loss-yau-derived", "--r-start", "5", "--r-end", "4") == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "paulizero.cli", "bootstrap", "--out", str(tmp_path)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert "7 steps" in proc.stdout
