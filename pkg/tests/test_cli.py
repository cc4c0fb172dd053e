import csv
import json
from importlib import resources

import jsonschema
import numpy as np
import pytest

from sode_geometry.cli import RunConfig, main, run as run_config
from sode_geometry.examples import knife_edge_closed_forms
from sode_geometry.sysfile import SystemFileError

from conftest import FIXTURES


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def report(capsys, *argv):
    code, out, err = run(capsys, *argv)
    return code, json.loads(out), err


@pytest.fixture(scope="module")
def schema():
    text = resources.files("sode_geometry").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


def test_verify_passes_on_fixtures(capsys, schema):
    for name in ("free_particle", "damped_oscillator", "tan_system", "knife_edge_constrained"):
        code, rep, err = report(capsys, "verify", FIXTURES / f"{name}.json", "--npoints", 4)
        assert code == 0, err
        assert rep["passed"] and rep["failures"] == []
        assert err.startswith("PASS")
        jsonschema.validate(rep, schema)


def test_verify_perturbation_fails_with_sized_residuals(capsys):
    code, rep, err = report(capsys, "verify", FIXTURES / "knife_edge_constrained.json", "--npoints", 4, "--perturb", 1e-3)
    assert code == 1
    assert err.startswith("FAIL")
    assert rep["failures"]
    worst = max(rep["residuals"].values())
    assert 1e-4 <= worst <= 1e-2


def test_inspect_phi_matches_closed_form(capsys, schema):
    code, rep, _ = report(capsys, "inspect", FIXTURES / "knife_edge_constrained.json", "--tensors", "phi")
    assert code == 0
    jsonschema.validate(rep, schema)
    assert rep["tensors"] == ["phi"]
    for pt in rep["points"]:
        t, phi, x, y, u_phi, u_x = pt["point"]
        cf = knife_edge_closed_forms(phi, u_phi, u_x)
        assert pt["values"]["phi"][1][1] == pytest.approx(cf["Phi22"], rel=1e-8, abs=1e-10)
        assert pt["values"]["phi"][1][0] == pytest.approx(cf["Phi21"], rel=1e-8, abs=1e-10)


def test_inspect_all_tensors(capsys, schema):
    for name in ("damped_oscillator", "knife_edge_constrained"):
        code, rep, _ = report(capsys, "inspect", FIXTURES / f"{name}.json", "--order", 3)
        assert code == 0
        jsonschema.validate(rep, schema)
        assert rep["points"][0]["residuals"]["duality"] <= 1e-12


def test_inspect_rejects_unknown_tensor(capsys):
    code, _, err = run(capsys, "inspect", FIXTURES / "free_particle.json", "--tensors", "phi,bogus")
    assert code == 2
    assert "bogus" in err


def test_roots_report(capsys, schema):
    code, rep, _ = report(capsys, "roots", FIXTURES / "follower_oscillator.json")
    assert code == 0
    jsonschema.validate(rep, schema)
    vals = rep["points"][0]["values"]
    assert [(r["mu"], r["multiplicity"]) for r in vals["roots"]] == [(0.0, 1)]
    assert vals["lambda_coefficients"][0] == pytest.approx(1.0)


def test_reduce_knife_edge(capsys, schema, tmp_path):
    emitted = tmp_path / "emitted.json"
    code, rep, _ = report(capsys, "reduce", FIXTURES / "knife_edge.json", "--emit", emitted)
    assert code == 0
    jsonschema.validate(rep, schema)
    for pt in rep["points"]:
        t, phi, x, y, u_phi, u_x = pt["point"]
        assert pt["values"]["F"] == pytest.approx([0.0, -u_phi * u_x * np.tan(phi)], abs=1e-12)
        assert pt["values"]["lambda"] == pytest.approx([u_phi * u_x], abs=1e-12)
        assert max(pt["residuals"].values()) <= 1e-10
    assert rep["emitted"] == str(emitted)
    # the emitted constrained system reproduces the reduced accelerations
    code, rep2, _ = report(capsys, "inspect", emitted, "--tensors", "phi")
    assert code == 0
    assert rep2["kind"] == "constrained"
    for a, b in zip(rep["points"], rep2["points"]):
        assert b["values"]["F"] == pytest.approx(a["values"]["F"], abs=1e-12)


def test_reduce_requires_nonholonomic_file(capsys):
    code, _, err = run(capsys, "reduce", FIXTURES / "free_particle.json")
    assert code == 2
    assert "nonholonomic" in err


def test_singular_exit_code(capsys):
    code, _, err = run(capsys, "reduce", FIXTURES / "singular.json")
    assert code == 4
    assert "singular" in err and "condition" in err


def test_domain_error_names_the_expression(capsys):
    code, _, err = run(capsys, "inspect", FIXTURES / "pole_point.json")
    assert code == 3
    assert "tan(phi)" in err
    assert "point 0" in err


def test_invalid_json(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    code, _, err = run(capsys, "inspect", bad)
    assert code == 2
    assert "invalid JSON" in err


def test_missing_file(capsys, tmp_path):
    code, _, _ = run(capsys, "inspect", tmp_path / "nope.json")
    assert code == 2


def test_bad_expression_reports_location(capsys, tmp_path):
    doc = json.loads((FIXTURES / "knife_edge_constrained.json").read_text())
    doc["F"][1] = "-u_phi*u_x*tan(phi"
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    code, _, err = run(capsys, "inspect", path)
    assert code == 2
    assert "F" in err
    assert "offset" in err


def test_schema_violation(capsys, tmp_path):
    doc = json.loads((FIXTURES / "free_particle.json").read_text())
    doc["kind"] = "mystery"
    path = tmp_path / "odd.json"
    path.write_text(json.dumps(doc))
    code, _, err = run(capsys, "verify", path)
    assert code == 2
    assert "kind" in err


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_output_is_byte_identical(capsys, monkeypatch, tmp_path):
    args = ["verify", FIXTURES / "knife_edge_constrained.json", "--npoints", 6, "--seed", 11]
    _, first, _ = run(capsys, *args)
    _, second, _ = run(capsys, *args)
    assert first == second
    monkeypatch.setenv("SODE_GEOMETRY_THREADS", "4")
    _, threaded, _ = run(capsys, *args)
    assert threaded == first
    out = tmp_path / "r.json"
    run(capsys, *args, "--out", out)
    assert out.read_text() == first


def test_seed_changes_random_points(capsys):
    base = ["verify", FIXTURES / "free_particle.json", "--npoints", 2]
    _, a, _ = report(capsys, *base, "--seed", 1)
    _, b, _ = report(capsys, *base, "--seed", 2)
    assert a["points"][-1]["point"] != b["points"][-1]["point"]


def test_timing_is_opt_in(capsys):
    _, rep, _ = report(capsys, "verify", FIXTURES / "free_particle.json", "--npoints", 1)
    assert "timing" not in rep
    _, rep, _ = report(capsys, "verify", FIXTURES / "free_particle.json", "--npoints", 1, "--timing")
    assert rep["timing"]["total_seconds"] >= 0.0


def test_csv_export(capsys, tmp_path):
    code, rep, _ = report(capsys, "verify", FIXTURES / "damped_oscillator.json", "--npoints", 2, "--csv", tmp_path)
    assert code == 0
    with open(tmp_path / "residuals.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["name", "max_residual"]
    assert {r[0]: float(r[1]) for r in rows[1:]} == rep["residuals"]
    with open(tmp_path / "points.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["index", "source", *rep["names"]]
    assert len(rows) == 1 + len(rep["points"])
    assert (tmp_path / "values.csv").stat().st_size > 0


def test_bad_thread_setting(capsys, monkeypatch):
    monkeypatch.setenv("SODE_GEOMETRY_THREADS", "many")
    code, _, err = run(capsys, "verify", FIXTURES / "free_particle.json", "--npoints", 1)
    assert code == 2
    assert "SODE_GEOMETRY_THREADS" in err


def test_programmatic_run_matches_cli(capsys):
    cfg = RunConfig("verify", str(FIXTURES / "damped_oscillator.json"), npoints=3, seed=5)
    rep, code = run_config(cfg)
    _, out, _ = run(capsys, "verify", FIXTURES / "damped_oscillator.json", "--npoints", 3, "--seed", 5)
    assert code == 0
    assert json.loads(out) == json.loads(json.dumps(rep))


@pytest.mark.parametrize("bad", [{"npoints": -1}, {"samples": 0}, {"order": 4}, {"command": "explode"}])
def test_run_config_validation(bad):
    fields = {"command": "verify", "file": "x.json"} | bad
    with pytest.raises(SystemFileError):
        RunConfig(**fields)
