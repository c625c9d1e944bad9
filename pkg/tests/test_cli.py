import json
import math
import subprocess
import sys

import pytest
from hypothesis import given
import hypothesis.strategies as st

from iunorm import cli, mc
from iunorm.cli import InputError, fit_rows, parse_expression, parse_range, run


@pytest.fixture
def f1_file(tmp_path):
    path = tmp_path / "f1.json"
    path.write_text(json.dumps({"breakpoints": [0, 1 / 3, 2 / 3, 1], "values": [3, 1, 2]}))
    return str(path)


# --- ranges and expressions ------------------------------------------------

@pytest.mark.parametrize("text, expected", [
    ("64:1024:x2", [64, 128, 256, 512, 1024]),
    ("2:10:+4", [2, 6, 10]),
    ("3,5,8", [3, 5, 8]),
    ("16", [16]),
    ("2:100:x3", [2, 6, 18, 54]),
])
def test_parse_range(text, expected):
    assert parse_range(text) == expected


@pytest.mark.parametrize("text", ["", "a:b:x2", "8:4:x2", "1:8:x1", "1:8:*2", "1:2:3:4", "0:4:x2"])
def test_parse_range_rejects(text):
    with pytest.raises(InputError):
        parse_range(text)


@given(st.integers(1, 5000), st.integers(1, 5000))
def test_expression_matches_python(n, m):
    env = {"n": n, "m": m}
    assert parse_expression("n*(1+ln m)")(env) == pytest.approx(n * (1 + math.log(m)))
    assert parse_expression("n * log2 n + 2.5")(env) == pytest.approx(n * math.log2(n) + 2.5)
    assert parse_expression("ln(n*m)")(env) == pytest.approx(math.log(n * m))


@pytest.mark.parametrize("text", ["n-1", "n*", "(n", "sqrt n", "n m", "ln", "1e"])
def test_expression_rejects(text):
    with pytest.raises(InputError):
        parse_expression(text)({"n": 2, "m": 2})


def test_expression_missing_variable():
    with pytest.raises(InputError):
        parse_expression("m")({"n": "4", "m": ""})


# --- subcommands -----------------------------------------------------------

def test_norm_prints_value(f1_file, capsys):
    assert run(["norm", "--input", f1_file, "--kind", "m-infty", "--m", "2"]) == 0
    assert float(capsys.readouterr().out) == pytest.approx(22 / 9, abs=1e-12)


def test_norm_chain_json(f1_file, capsys):
    assert run(["norm", "--input", f1_file, "--kind", "star", "--m", "2", "--chain",
                "--format", "json", "--no-timestamp"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["config"]["seed"] == 0xC0FFEE
    assert doc["result"]["value"] == pytest.approx(20 / 9)
    assert doc["result"]["chain"]["lower_ok"] and "timestamp" not in doc


@pytest.mark.parametrize("argv", [
    ["norm", "--bogus"],
    ["frobnicate"],
    [],
    ["norm", "--input", "/nonexistent.json", "--kind", "l1"],
    ["sweep", "--system", "nosuch", "--norm", "l2", "--n", "8"],
    ["sweep", "--system", "rademacher", "--norm", "m-infty", "--n", "8"],
    ["sweep", "--system", "rademacher", "--norm", "l2", "--n", "8", "--threads", "0"],
    ["verify", "--oracle", "lemma1"],
    ["verify", "--oracle", "clt", "--random", "3"],
])
def test_input_errors_exit_1(argv, capsys):
    assert run(argv) == 1


def test_bad_kind_and_bad_instance(f1_file, tmp_path, capsys):
    assert run(["norm", "--input", f1_file, "--kind", "nosuch"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["norm", "--input", str(bad), "--kind", "l1"]) == 1
    inst = tmp_path / "inst.json"
    inst.write_text(json.dumps({"probs": [0.5, 0.6], "events": [[0]], "kappa": 0.5}))
    assert run(["verify", "--oracle", "lemma1", "--instance", str(inst)]) == 1


def _sweep(tmp_path, name, threads, extra=()):
    out = tmp_path / name
    argv = ["sweep", "--system", "rademacher", "--coeffs", "rademacher", "--norm", "m-infty",
            "--n", "16:64:x2", "--m", "2:8:x2", "--trials", "40", "--seed", "42",
            "--no-timestamp", "--threads", str(threads), "--out", str(out), *extra]
    assert run(argv) == 0
    return out


def test_sweep_byte_identical_across_threads(tmp_path):
    a = _sweep(tmp_path, "a.csv", 1).read_bytes()
    b = _sweep(tmp_path, "b.csv", 3).read_bytes()
    assert a == b
    rows = mc.read_sweep_csv(open(tmp_path / "a.csv"))
    assert len(rows) == 9 and {r["flag"] for r in rows} == {"ok"}


def test_sweep_header_echoes_config(tmp_path):
    text = _sweep(tmp_path, "a.csv", 1).read_text()
    header = [l for l in text.splitlines() if l.startswith("#")]
    cfg = json.loads(header[1].removeprefix("# config "))
    assert cfg["seed"] == 42 and cfg["n"] == [16, 32, 64] and cfg["m"] == [2, 4, 8]
    assert not any("timestamp" in l for l in header)
    stamped = tmp_path / "s.csv"
    run(["sweep", "--system", "rademacher", "--norm", "l2", "--n", "8", "--trials", "5",
         "--out", str(stamped)])
    assert any(l.startswith("# timestamp") for l in stamped.read_text().splitlines())


def test_fit_round_trip_is_exact(tmp_path, capsys):
    path = _sweep(tmp_path, "a.csv", 1)
    assert run(["fit", "--in", str(path), "--x", "n*(1+ln m)", "--y", "mean", "--no-timestamp"]) == 0
    from_cli = json.loads(capsys.readouterr().out)["result"]
    # in-memory fit from the points, before any CSV formatting
    points = mc.run_sweep(
        lambda n: cli.systems.make_system("rademacher", n, 16384, 42),
        cli.coeffs.parse_model("rademacher"),
        lambda m: cli.norms.parse_norm_kind("m-infty", m), [16, 32, 64], [2, 4, 8], 40, 42)
    fit = mc.scaling_fit([(p.n * (1 + math.log(p.m)), p.estimate.mean) for p in points], "n*(1+ln m)")
    assert from_cli == fit.to_json()


def test_fit_errors(tmp_path, capsys):
    path = _sweep(tmp_path, "a.csv", 1)
    assert run(["fit", "--in", str(path), "--x", "n", "--y", "nosuch"]) == 1
    assert run(["fit", "--in", str(path), "--x", "n-", "--y", "mean"]) == 1
    assert run(["fit", "--in", str(tmp_path / "missing.csv"), "--x", "n"]) == 1


def test_fit_rows_skips_flagged():
    rows = [{"n": str(n), "m": "", "mean": str(n**0.5), "flag": "ok"} for n in (4, 16, 64)]
    rows.append({"n": "256", "m": "", "mean": "1e9", "flag": "timeout"})
    assert fit_rows(rows, "n", "mean").exponent == pytest.approx(0.5)
    assert fit_rows(rows, "n", "mean", include_all=True).exponent > 1


def test_check_and_signs(capsys):
    assert run(["check", "--condition", "d", "--system", "mixed:q=0.5", "--n", "8",
                "--no-timestamp"]) == 0
    doc = json.loads(capsys.readouterr().out)
    res = doc["result"]
    # a global sign flip leaves the norm unchanged, so only half the patterns are visited
    assert res["exhaustive"] and res["trials_used"] == 2**7
    # fitted M is the max value over n^(1/2+p) at the fitted p
    assert res["fitted_M"] == pytest.approx(res["max_value"] / 8 ** (0.5 + res["fitted_p"]))
    assert run(["signs", "--system", "rademacher", "--n", "6", "--kmax", "2",
                "--no-timestamp"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["config"]["kmax"] == 2


def test_verify_instance(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    inst.write_text(json.dumps({"probs": [0.25] * 4, "events": [[0, 1], [1, 2]], "kappa": 1 / 3}))
    assert run(["verify", "--oracle", "lemma1", "--instance", str(inst), "--no-timestamp"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["result"]["hypothesis_ok"] and doc["result"]["conclusion_ok"]


@pytest.mark.parametrize("oracle", ["lemma1", "tver", "tver2", "geom"])
def test_verify_random(oracle, capsys):
    assert run(["verify", "--oracle", oracle, "--random", "50", "--seed", "3"]) == 0
    res = json.loads(capsys.readouterr().out)["result"]
    assert res["instances"] == 50 and res["violations"] == 0


def test_console_script_exit_codes(f1_file):
    ok = subprocess.run([sys.executable, "-m", "iunorm", "norm", "--input", f1_file,
                         "--kind", "l1"], capture_output=True, text=True)
    assert ok.returncode == 0 and float(ok.stdout) == pytest.approx(2.0)
    bad = subprocess.run([sys.executable, "-m", "iunorm", "norm", "--nope"],
                         capture_output=True, text=True)
    assert bad.returncode == 1 and "usage" in bad.stderr
