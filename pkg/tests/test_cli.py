import csv
import json

import jsonschema
import numpy as np
import pytest

from cascade_adrc import cli
from cascade_adrc.config import ConfigError, bundled_scenario, load_schema, validate
from cascade_adrc.sim import NumericAbort

TIMESERIES_HEADER = "t,e1[0],e2[0],ztilde[0],ztilde[1],ztilde[2],u[0],v[0]"
GRID_HEADER = ("T,omega,rejection,ISE,ISC,diverged,sup_zeta_bar,lambda_min_QY1,Lambda_V,Gamma_V,"
               "error_bound,certified,error")
SWEEP_HEADER = "omega,kappa,lambda_min_QY1,Lambda_V,Gamma_V,bound,C1,Lambda_V_printed,Gamma_V_printed,bound_printed"


def _doc(name):
    with open(bundled_scenario(name)) as fh:
        return json.load(fh)


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _run(cmd, config, out, *extra):
    return cli.main([cmd, "--config", config, "--out", str(out), *extra])


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_simulate_bundled_scenario(tmp_path):
    assert _run("simulate", bundled_scenario("sim_T01_w4_on"), tmp_path, "--duration", "2") == 0
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert np.isfinite(summary["ISE"]) and summary["ISE"] > 0
    assert summary["diverged"] is False
    assert "steady_state_sup_zeta_bar" in summary
    jsonschema.validate(summary, load_schema("summary"))
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["command"] == "simulate" and manifest["seed"] == 0
    with open(tmp_path / "timeseries.csv") as fh:
        assert fh.readline().strip() == TIMESERIES_HEADER


def test_summary_values_round_trip_at_full_precision(tmp_path):
    _run("simulate", bundled_scenario("sim_T01_w4_on"), tmp_path, "--duration", "1")
    rows = _rows(tmp_path / "timeseries.csv")
    from cascade_adrc.config import load
    from cascade_adrc.sim import run_scenario

    res = run_scenario(load(bundled_scenario("sim_T01_w4_on")).scenario.replace(duration=1.0))
    assert float(rows[-1]["e1[0]"]) == res.e1[-1, 0]
    assert json.loads((tmp_path / "summary.json").read_text())["ISE"] == res.ISE


@pytest.mark.parametrize("T", [-1.0, 0.0])
def test_nonpositive_T_is_config_error(tmp_path, capsys, T):
    doc = _doc("sim_T01_w4_on")
    doc["plant"]["T"] = T
    assert _run("simulate", _write(tmp_path, doc), tmp_path / "out") == 2
    err = capsys.readouterr().err
    assert "plant.T" in err and "T-positivity invariant" in err


def test_zero_omega_is_config_error(tmp_path, capsys):
    doc = _doc("sim_T01_w4_on")
    doc["omega"] = 0
    assert _run("simulate", _write(tmp_path, doc), tmp_path / "out") == 2
    assert "omega" in capsys.readouterr().err


def test_schema_error_names_path(tmp_path):
    doc = _doc("sim_T01_w4_on")
    doc["gains"]["scaled"]["K3_bar"] = "one"
    with pytest.raises(ConfigError) as info:
        validate(doc)
    assert info.value.path == "gains.scaled.K3_bar"


def test_missing_and_malformed_files(tmp_path):
    assert _run("simulate", str(tmp_path / "nope.json"), tmp_path / "out") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{ not json")
    assert _run("simulate", str(bad), tmp_path / "out") == 2


def test_step_override_is_validated(tmp_path):
    assert _run("simulate", bundled_scenario("sim_T01_w4_on"), tmp_path, "--step", "1e-3") == 2


def test_grid_bundled(tmp_path):
    assert _run("grid", bundled_scenario("scalar_grid"), tmp_path, "--duration", "2", "--parallel", "4") == 0
    text = (tmp_path / "grid_summary.csv").read_text()
    assert text.splitlines()[0] == GRID_HEADER
    rows = _rows(tmp_path / "grid_summary.csv")
    assert len(rows) == 12
    assert all(r["error"] == "" for r in rows)
    assert _run("grid", bundled_scenario("scalar_grid"), tmp_path / "again", "--duration", "2") == 0
    assert (tmp_path / "again" / "grid_summary.csv").read_text() == text


def test_grid_empty_T_list(tmp_path):
    doc = _doc("scalar_grid")
    doc["grid"]["T"] = []
    assert _run("grid", _write(tmp_path, doc), tmp_path / "out") == 2


def test_grid_bad_T_entry_names_index(tmp_path, capsys):
    doc = _doc("scalar_grid")
    doc["grid"]["T"] = [0.1, -1.0]
    assert _run("grid", _write(tmp_path, doc), tmp_path / "out") == 2
    assert "grid.T[1]" in capsys.readouterr().err


def test_numeric_abort_exit_code(tmp_path, monkeypatch):
    def boom(*a, **kw):
        raise NumericAbort(7, 7e-4)

    monkeypatch.setattr(cli, "run_scenario", boom)
    assert _run("simulate", bundled_scenario("sim_T01_w4_on"), tmp_path) == 3


def test_grid_numeric_abort_exit_code(tmp_path, monkeypatch):
    from cascade_adrc.sim import scenario

    def boom(*a, **kw):
        raise NumericAbort(7, 7e-4)

    monkeypatch.setattr(scenario, "run_scenario", boom)
    assert _run("grid", bundled_scenario("scalar_grid"), tmp_path, "--duration", "1") == 3
    rows = _rows(tmp_path / "grid_summary.csv")
    assert len(rows) == 12 and all(r["error"].startswith("NumericAbort") for r in rows)


def _stability(tmp_path, name):
    out = tmp_path / name
    assert _run("stability", bundled_scenario(name), out) == 0
    return json.loads((out / "stability_report.json").read_text()), out


def test_stability_reports_feasible_interval(tmp_path):
    rep, out = _stability(tmp_path, "stability_T01")
    assert len(rep["omega_feasible"]) == 1
    lo, hi = rep["omega_feasible"][0]
    assert 0 < lo < hi
    assert (out / "omega_sweep.csv").read_text().splitlines()[0] == SWEEP_HEADER
    assert len(_rows(out / "omega_sweep.csv")) == 200


def test_stability_upper_endpoint_shrinks_with_T(tmp_path):
    fast, _ = _stability(tmp_path, "stability_T01")
    slow, _ = _stability(tmp_path, "stability_T1")
    assert slow["omega_feasible"][0][1] < fast["omega_feasible"][0][1]


def test_zero_bounds_give_zero_gamma(tmp_path):
    doc = _doc("stability_T01")
    doc["stability"]["bounds"] = {k: 0.0 for k in ("h_1a", "h_1b", "h_2a", "h_2b", "q_z1", "q_z2", "q_u", "q_t")}
    doc["trajectory"]["amplitude"] = 0.0
    assert _run("stability", _write(tmp_path, doc), tmp_path / "out") == 0
    rep = json.loads((tmp_path / "out" / "stability_report.json").read_text())
    assert rep["Gamma_V"] == 0.0 and rep["Gamma_V_printed"] == 0.0


def test_printed_gamma_zero_without_disturbances(tmp_path):
    rep, _ = _stability(tmp_path, "stability_T01")
    assert rep["Gamma_V_printed"] == 0.0
    # the rigorous bound keeps the reference jerk term |B^-1| x_b3
    assert rep["Gamma_V"] == pytest.approx(1000.0)


def test_stability_needs_scaled_gains(tmp_path):
    doc = _doc("stability_T01")
    doc["gains"] = {"raw": {"Kp": 1e-4, "Kd": 0.02, "K1": 3.0, "K2": 3.0, "K3": 1.0}}
    del doc["omega"], doc["kappa"]
    assert _run("stability", _write(tmp_path, doc), tmp_path / "out") == 2


def test_telescope_command(tmp_path):
    assert _run("telescope", bundled_scenario("telescope_500vs"), tmp_path, "--duration", "1") == 0
    rows = _rows(tmp_path / "telescope_summary.csv")
    assert [r["variant"] for r in rows] == ["none", "reference_based"]
    assert (tmp_path / "timeseries_none.csv").exists()
    summary = json.loads((tmp_path / "summary.json").read_text())
    for v in summary["variants"].values():
        jsonschema.validate(v, load_schema("summary"))


def test_telescope_rejects_scalar_plant(tmp_path):
    assert _run("telescope", bundled_scenario("sim_T01_w4_on"), tmp_path) == 2


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert _run("simulate", bundled_scenario("sim_T01_w4_on"), blocker / "sub") == 2
