import io
import json
import subprocess
import sys
import time
from pathlib import Path

import pytest

from blockopt.cli import main

DATA = Path(__file__).parent / "data"


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def write_config(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(path)


def error_record(err):
    lines = err.splitlines()
    assert len(lines) == 1
    return json.loads(lines[0])


def test_constant_resource_summary(tmp_path):
    cfg = write_config(tmp_path, {"resource": {"constant": 0.2}, "grid_n": 128})
    code, out, _ = run(["solve", "--config", cfg])
    assert code == 0
    summary = json.loads(out)
    assert summary["F"] == pytest.approx(0.2, abs=1e-15)
    assert summary["extrema"] == []


def test_solve_matches_golden(tmp_path):
    target = tmp_path / "sol.csv"
    code, out, _ = run(["solve", "--config", str(DATA / "half_left.json"), "--out", str(target)])
    assert code == 0
    assert target.read_bytes() == (DATA / "half_left_mu1.csv").read_bytes()
    assert json.loads(out)["F"] == pytest.approx(0.5188001057985797, abs=1e-13)


def test_flags_override_config(tmp_path):
    code, out, _ = run(["solve", "--config", str(DATA / "half_left.json"), "--mu", "2", "--grid", "128"])
    s = json.loads(out)
    assert code == 0 and s["mu"] == 2.0 and s["grid_n"] == 128


def test_malformed_json(tmp_path):
    cfg = write_config(tmp_path, '{"resource": {"domain": [0, 1], ')
    code, _, err = run(["solve", "--config", cfg])
    assert code == 1
    rec = error_record(err)
    assert rec["error"] == "ConfigError" and rec["field"] == "config" and rec["exit_code"] == 1


@pytest.mark.parametrize("cfg,field", [
    ({}, "resource"),
    ({"resource": {"domain": [0, 1]}}, "resource"),
    ({"resource": {"domain": [0, 1], "intervals": [[0, 0.3], [0.2, 0.5]]}}, "resource"),
    ({"resource": {"constant": 0.2}, "mu": -1}, "mu"),
    ({"resource": {"constant": 0.2}, "grid_n": "big"}, "grid_n"),
])
def test_config_errors_name_field(tmp_path, cfg, field):
    code, _, err = run(["solve", "--config", write_config(tmp_path, cfg)])
    assert code == 1
    assert error_record(err)["field"] == field


def test_overlap_message_names_invariant(tmp_path):
    cfg = {"resource": {"domain": [0, 1], "intervals": [[0, 0.3], [0.2, 0.5]]}}
    _, _, err = run(["solve", "--config", write_config(tmp_path, cfg)])
    assert "pairwise disjoint" in error_record(err)["message"]


def test_usage_error_is_json():
    code, _, err = run(["solve", "--bogus"])
    assert code == 1 and error_record(err)["error"] == "UsageError"
    code, _, err = run([])
    assert code == 1 and error_record(err)["error"] == "UsageError"


def test_march_command(tmp_path):
    cfg = write_config(tmp_path, {"resource": {"domain": [0, 1], "intervals": [[0, 0.5]]}, "grid_n": 128})
    code, out, _ = run(["march", "--config", cfg])
    _, solved, _ = run(["solve", "--config", cfg])
    assert code == 0
    assert json.loads(out)["F"] == pytest.approx(json.loads(solved)["F"], abs=1e-7)
    code, _, err = run(["march", "--config", cfg, "--grid", "64"])
    assert code == 0
    bad = write_config(tmp_path, {"resource": {"constant": 0.3}, "theta0": [1, 2]}, "bad.json")
    code, _, err = run(["march", "--config", bad])
    assert code == 1 and error_record(err)["field"] == "theta0"


def test_surface_smoke(tmp_path):
    start = time.perf_counter()
    code, out, _ = run(["surface", "--grid", "3"])
    assert time.perf_counter() - start < 10
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "l,b_over_l,H" and len(lines) == 10
    for line in lines[1:]:
        l, r, h = map(float, line.split(","))
        if r in (0.0, 1.0):
            assert h == 0.0
    assert run(["surface", "--grid", "3"])[1] == out


def test_series_command():
    code, out, _ = run(["series", "--m0", "0.05", "--mu", "10", "--grid", "6"])
    assert code == 0
    rec = json.loads(out)
    assert set(rec) >= {"m0", "mu", "K", "F_series", "F_direct", "per_order"}
    assert rec["K"] == 6 and len(rec["per_order"]) == 6
    assert abs(rec["F_series"] - rec["F_direct"]) <= 1e-6
    code, _, err = run(["series", "--m0", "1.5"])
    assert code == 1 and error_record(err)["field"] == "m0"


def test_improve_command(tmp_path):
    cfg = write_config(tmp_path, {"resource": {"domain": [0, 1], "intervals": [[0.1, 0.2], [0.35, 0.45]]}})
    code, out, _ = run(["improve", "--config", cfg])
    assert code == 0
    rep = json.loads(out)
    assert rep["mass_after"] < rep["mass_before"]
    assert abs(rep["pop_after"] - rep["pop_before"]) <= 1e-6
    block = write_config(tmp_path, {"resource": {"domain": [0, 1], "intervals": [[0, 0.3]]}}, "block.json")
    code, _, err = run(["improve", "--config", block])
    assert code == 1 and error_record(err)["error"] == "AlreadyDecomposable"


def test_optimize_command(tmp_path):
    cfg = write_config(tmp_path, {"m0": 0.05, "mu": 1.0, "r_max": 2, "grid": 10})
    code, out, _ = run(["optimize", "--config", cfg])
    assert code == 0
    rec = json.loads(out)
    assert rec["single_block_wins"]
    assert all(len(c["blocks"]) == 1 for c in rec["best"])


def test_verify_requires_seed():
    code, _, err = run(["verify", "--suite", "series"])
    assert code == 1 and error_record(err)["field"] == "seed"


def test_verify_unknown_suite():
    code, _, err = run(["verify", "--seed", "1", "--suite", "nope"])
    assert code == 1 and error_record(err)["field"] == "suite"


def test_verify_single_suite():
    code, out, _ = run(["verify", "--seed", "3", "--suite", "advantage"])
    rep = json.loads(out)
    assert [s["suite"] for s in rep["suites"]] == ["advantage"]
    assert code == 0 and rep["passed"]


def test_verify_bounds_only():
    code, out, _ = run(["verify", "--seed", "0", "--suite", "bounds"])
    rep = json.loads(out)
    assert [s["suite"] for s in rep["suites"]] == ["bounds"]
    assert code == 0


def test_injected_fault_is_named(tmp_path):
    cfg = write_config(tmp_path, {"tolerance_scale": 1e-6})
    code, out, _ = run(["verify", "--config", cfg, "--seed", "0", "--suite", "crossval"])
    assert code == 3
    rep = json.loads(out)
    assert "crossval.solve_vs_march" in rep["failed"]
    assert not rep["passed"]


def test_subset_reproduces_full_run_numbers():
    _, a, _ = run(["verify", "--seed", "5", "--suite", "series", "--suite", "advantage"])
    _, b, _ = run(["verify", "--seed", "5", "--suite", "advantage"])
    adv_a = [s for s in json.loads(a)["suites"] if s["suite"] == "advantage"]
    assert adv_a == json.loads(b)["suites"]


def test_console_script_entry(tmp_path):
    out = subprocess.run([sys.executable, "-m", "blockopt.cli", "series", "--grid", "2"],
                         capture_output=True, text=True, check=False)
    assert out.returncode == 0
    assert json.loads(out.stdout)["K"] == 2
