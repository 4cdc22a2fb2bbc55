import csv
import json
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from asdglue.cli_reports import DEFAULTS, RunConfig, main, resolve
from asdglue.errors import ValidationError


def run_cli(tmp_path, config: dict, *extra, name="out"):
    cfg = tmp_path / f"{name}.json"
    cfg.write_text(json.dumps(config))
    out = tmp_path / name
    code = main(["--config", str(cfg), "--out", str(out), *extra])
    return code, out


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_spectrum_command(tmp_path):
    code, out = run_cli(tmp_path, {"command": "spectrum", "params": {"model": "s3_scalar", "strip": [-3, 3]}})
    assert code == 0
    rows = read_csv(out / "spectrum.csv")
    assert_allclose([float(r["weight"]) for r in rows], [-np.sqrt(8), -np.sqrt(3), 0, np.sqrt(3), np.sqrt(8)],
                    atol=1e-9)
    assert [int(r["d"]) for r in rows] == [9, 4, 2, 4, 9]
    assert rows[2]["chains"] == "2"
    schema = json.loads((out / "spectrum.schema.json").read_text())
    assert [c["name"] for c in schema["columns"]] == list(rows[0])
    summary = json.loads((out / "spectrum.json").read_text())
    assert_allclose(summary["delta0"], np.sqrt(3))


def test_manifest_contents(tmp_path):
    code, out = run_cli(tmp_path, {"command": "spectrum"}, "--seed", "7")
    m = json.loads((out / "manifest.json").read_text())
    assert m["status"] == "ok" and m["exit_code"] == 0 and m["seed"] == 7
    assert m["params"]["p"] == 3.0
    assert_allclose(m["params"]["delta"], 2 / 3)
    assert m["params"]["delta_rule"] == "2 - 4/p"
    assert {"numpy", "scipy", "asdglue", "python"} <= set(m["versions"])
    assert len(m["config_sha256"]) == 64
    assert "spectrum.csv" in m["artifacts"]
    assert m["units"]["p"]


def test_solve_two_half_cylinders(tmp_path):
    code, out = run_cli(tmp_path, {"command": "solve", "params": {
        "bodies": [{"name": "half_cylinder", "k": 1}, {"name": "half_cylinder", "k": 1}], "l": 4.0}})
    assert code == 0
    rows = read_csv(out / "iterations.csv")
    assert len(rows) == 1 and float(rows[0]["residual_W"]) == 0.0
    assert json.loads((out / "solve.json").read_text())["nondegeneracy"]["sup_h"] == 0.0


def test_solve_eh_cylinder(tmp_path):
    code, out = run_cli(tmp_path, {"command": "solve", "params": {"l": 3.0}})
    assert code == 0
    s = json.loads((out / "solve.json").read_text())
    assert s["converged"] and s["residual_W"] <= 1e-9
    assert (out / "final_profile.json").is_file()


@pytest.mark.parametrize("config", [
    {"command": "spectrum", "params": {"bogus": 1}},
    {"command": "glue", "params": {"l": 1.5}},
    {"command": "glue", "params": {"l": 4.05}},
    {"command": "glue", "params": {"p": 4.5}},
    {"command": "curvature", "params": {"nodes": 3}},
    {"command": "index", "params": {"weight": 0.0}},
    {"command": "glue", "params": {"bodies": [{"profile": "missing.json"}, "s4"]}},
    {"command": "explode"},
    {"command": "spectrum", "extra": 1},
], ids=["unknown-param", "short-neck", "off-grid", "p-range", "stencil", "exceptional", "missing-input",
        "unknown-command", "unknown-key"])
def test_invalid_config_writes_nothing(tmp_path, config):
    code, out = run_cli(tmp_path, config)
    assert code == ValidationError.exit_code
    assert not out.exists()


def test_exit_codes_are_distinct(tmp_path):
    inconclusive, _ = run_cli(tmp_path, {"command": "spectrum", "params": {"strip": [-5, 5]}}, name="a")
    divergence, out = run_cli(tmp_path, {"command": "solve", "params": {"l": 3.0, "tol": 1e-16}}, name="b")
    hypothesis, _ = run_cli(tmp_path, {"command": "solve", "params": {"delta": 2.5}}, name="c")
    assert (inconclusive, divergence, hypothesis) == (3, 4, 5)
    m = json.loads((out / "manifest.json").read_text())
    assert m["status"] == "failed" and "DivergenceError" in m["error"]
    assert len(read_csv(out / "iterations.csv")) >= 2


def test_sweep_deterministic_across_jobs(tmp_path):
    config = {"command": "sweep", "params": {"l_list": [3.0, 4.0, 5.0], "quantities": ["residual"],
                                             "delta_list": [1 / 3, 2 / 3]}}
    c1, o1 = run_cli(tmp_path, config, "--jobs", "1", name="serial")
    c2, o2 = run_cli(tmp_path, config, "--jobs", "3", name="pool")
    assert c1 == c2 == 0
    assert (o1 / "sweep.csv").read_bytes() == (o2 / "sweep.csv").read_bytes()
    slopes = json.loads((o1 / "sweep_summary.json").read_text())["slopes"]
    for entry in slopes:
        assert abs(entry["slope_unweighted"] + 4.0) < 0.2
        assert abs(entry["slope_weighted"] + 4.0 - entry["delta"]) < 0.2


def test_sweep_partial_and_total_failure(tmp_path):
    code, out = run_cli(tmp_path, {"command": "sweep", "params": {
        "l_list": [4.0], "delta_list": [2 / 3, 2.5], "quantities": ["probe"]}}, name="partial")
    assert code == 0
    rows = read_csv(out / "sweep.csv")
    assert [r["status"] for r in rows] == ["ok", "failed"]
    assert "HypothesisError" in rows[1]["error"]
    code, out = run_cli(tmp_path, {"command": "sweep", "params": {
        "l_list": [4.0], "delta_list": [2.5], "quantities": ["probe"]}}, name="total")
    assert code == 5
    assert (out / "sweep.csv").is_file()


def test_single_point_sweep_matches_glue(tmp_path):
    _, og = run_cli(tmp_path, {"command": "glue", "params": {"l": 4.0}}, name="glue")
    _, osw = run_cli(tmp_path, {"command": "sweep", "params": {"l_list": [4.0], "quantities": ["residual"]}},
                     name="sweep")
    g = json.loads((og / "glue.json").read_text())
    r = read_csv(osw / "sweep.csv")[0]
    assert float(r["residual_unweighted"]) == g["residual_unweighted"]
    assert float(r["residual_weighted"]) == g["residual_weighted"]


def test_conformally_flat_pair_slopes_unmeasurable(tmp_path):
    code, out = run_cli(tmp_path, {"command": "sweep", "params": {
        "bodies": ["s4", "s4"], "l_list": [4.0, 5.0, 6.0], "quantities": ["residual"]}})
    assert code == 0
    assert json.loads((out / "sweep_summary.json").read_text())["slopes"][0]["slope_unweighted"] is None


def test_curvature_with_conformal_factors(tmp_path):
    code, out = run_cli(tmp_path, {"command": "curvature", "params": {
        "metric": "eguchi_hanson", "nodes": 9, "conformal_factors": 2}}, "--seed", "1")
    assert code == 0
    res = json.loads((out / "curvature.json").read_text())
    assert len(res["conformal_relative_deviation"]) == 2
    assert (out / "wplus.json").is_file() and (out / "wplus.bin").is_file()


def test_resolve_fills_defaults():
    par = resolve(RunConfig("probe"))
    assert par["l_list"] == [4.0, 6.0, 8.0]
    assert par["t_max"] == 12.0
    assert set(DEFAULTS["probe"]) <= set(par)


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "asdglue", "spectrum", "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0
    assert (tmp_path / "o" / "spectrum.csv").is_file()
