from __future__ import annotations

import json
from pathlib import Path

import pytest

from msnc.pipeline import ConfigError, build_config, resolve_document, run_scenario, validate_config
from msnc.pipeline import scenarios as sc
from msnc.pipeline.cli import main
from msnc.pipeline.config import default_document


def _write(tmp_path: Path, doc: dict) -> Path:
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return p


def _errors(doc: dict) -> list[str]:
    with pytest.raises(ConfigError) as ei:
        build_config(resolve_document(doc))
    return ei.value.errors


def test_default_config_is_valid_and_echoes_component_values():
    cfg = build_config(resolve_document())
    assert cfg.r_load == 11e3 and cfg.c_rect == 100e-9
    assert cfg.diode.i_s == 4e-8 and cfg.diode.r_s == 12.0 and cfg.diode.v_j == 0.51
    assert cfg.substrate.eps_r == 3.55 and cfg.substrate.h == 1.52e-3
    assert len(cfg.k_grid) == 50 and cfg.k_grid[0] == 0.02 and cfg.k_grid[-1] == 1.0
    assert len(cfg.power_grid_dbm) == 66 and cfg.power_grid_dbm[0] == -50.0
    assert len(cfg.frequency_grid_hz) == 101
    assert cfg.design.max_trials == 1000 and cfg.design.population == 40


def test_negative_load_is_one_error_naming_the_field():
    errs = _errors({"components": {"r_load_ohm": -5}})
    assert len(errs) == 1 and "components.r_load_ohm" in errs[0]


def test_empty_power_grid_is_one_error():
    errs = _errors({"power_grid_dbm": []})
    assert len(errs) == 1 and "power_grid_dbm" in errs[0]


def test_all_violations_are_reported():
    errs = _errors({"scenario": "nope", "seed": -1, "k_grid": [0.5, 0.2], "diode": {"n": 0.2},
                    "thresholds": {"rx_upper_dbm": 3.0}})
    joined = "\n".join(errs)
    for field in ("scenario", "seed", "k_grid", "diode", "thresholds"):
        assert field in joined
    assert len(errs) == 5


def test_grid_forms():
    cfg = build_config(resolve_document({"power_grid_dbm": {"start": -10, "stop": 0, "points": 3}}))
    assert cfg.power_grid_dbm == (-10.0, -5.0, 0.0)
    assert "power_grid_dbm" in _errors({"power_grid_dbm": [-60, 0]})[0]
    assert "frequency_grid_hz" in _errors({"frequency_grid_hz": {"start": 1, "stop": 2}})[0]


def test_validate_config_file(tmp_path):
    assert validate_config(_write(tmp_path, {"scenario": "fig7"})).scenario == "fig7"
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError) as ei:
        validate_config(bad)
    assert "line 1" in ei.value.errors[0]


def test_validate_cli_exit_codes(tmp_path, capsys):
    assert main(["validate", str(_write(tmp_path, {}))]) == 0
    assert main(["validate", str(_write(tmp_path, {"components": {"c_rect_f": 0}}))]) == 1
    assert "components.c_rect_f" in capsys.readouterr().err


def test_unknown_scenario_writes_nothing(tmp_path):
    out = tmp_path / "o"
    assert main(["scenario", "fig99", "--out", str(out)]) == 1
    assert not out.exists()


def test_bad_flag_is_usage_error():
    assert main(["scenario"]) == 1
    assert main(["frobnicate"]) == 1


def _fig4(tmp_path, name, fmt="csv"):
    cfg = build_config(resolve_document(scenario="fig4"))
    return run_scenario(cfg, tmp_path / name, fmt)


def test_fig4_scenario_outputs(tmp_path):
    rep = _fig4(tmp_path, "a")
    out = tmp_path / "a"
    names = {m["path"] for m in rep.manifest}
    assert names == {"k_sweep.csv", "fit.json", "timing.json"}
    assert {p.name for p in out.iterdir()} == names | {"report.json"}
    assert rep.checks["k1_matched_anchor"]["passed"]
    last = (out / "k_sweep.csv").read_text().splitlines()[-1].split(",")
    assert last[0] == "1" and abs(float(last[1]) - 50) <= 1
    report = json.loads((out / "report.json").read_text())
    assert report["status"] == "ok" and report["config"]["scenario"] == "fig4"


def test_fig4_is_byte_identical(tmp_path):
    a = _fig4(tmp_path, "a")
    _fig4(tmp_path, "b")
    for m in a.manifest:
        if m["deterministic"]:
            assert (tmp_path / "a" / m["path"]).read_bytes() == (tmp_path / "b" / m["path"]).read_bytes()
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()


def test_json_format(tmp_path):
    rep = _fig4(tmp_path, "j", "json")
    assert "k_sweep.json" in {m["path"] for m in rep.manifest}
    rows = json.loads((tmp_path / "j" / "k_sweep.json").read_text())
    assert len(rows) == 50 and rows[-1]["k"] == 1.0


def test_failing_stage_leaves_partial_manifest(tmp_path, monkeypatch):
    def boom(run):
        raise sc.ConvergenceError("no steady state")

    monkeypatch.setitem(sc.SCENARIO_STAGES, "fig4", lambda run: [("solve-k", sc._k_rows), ("explode", boom)])
    cfg = build_config(resolve_document(scenario="fig4"))
    with pytest.raises(sc.StageError) as ei:
        run_scenario(cfg, tmp_path / "f")
    assert ei.value.stage == "explode"
    rep = json.loads((tmp_path / "f" / "report.json").read_text())
    assert rep["status"] == "failed" and rep["failed_stage"] == "explode"
    assert {m["path"] for m in rep["manifest"]} == {"k_sweep.csv", "timing.json"}
    assert main(["scenario", "fig4", "--out", str(tmp_path / "g")]) == 2


def test_cli_analyze_quarter_wave(tmp_path):
    out = tmp_path / "a.json"
    assert main(["analyze", "--stage", "tline:70.7107:90", "--load", "100", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["z_in"][0] == pytest.approx(50.0, rel=1e-5)


def test_cli_solve_k_and_fit(tmp_path):
    out = tmp_path / "k.csv"
    assert main(["solve-k", "1.0", "0.5", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("k,") and len(lines) == 3
    assert main(["solve-k", "1.5"]) == 1
    fit = tmp_path / "fit.json"
    assert main(["fit", "--out", str(fit)]) == 0
    assert len(json.loads(fit.read_text())["imag_coeffs"]) == 4


def test_cli_diode_and_simulate(tmp_path):
    d = tmp_path / "d.json"
    assert main(["diode-extract", "--power", "-40", "--format", "json", "--out", str(d)]) == 0
    assert json.loads(d.read_text())[0]["converged"]
    s = tmp_path / "s.csv"
    assert main(["simulate", "--circuit", "rectifier", "--power", "-10", "--out", str(s)]) == 0
    header, row = s.read_text().splitlines()
    assert header.startswith("p_in_dbm,p_dc_w,eta,s11_db,s21_db")


def test_reference_networks_load():
    doc = default_document()
    cfg = build_config(resolve_document(doc))
    assert cfg.networks.mn1.w > 0
    assert build_config(resolve_document({"networks": "published"})).networks.mn2.r2 == 0
    assert "networks" in _errors({"networks": 7})[0]
