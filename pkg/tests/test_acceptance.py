"""End-to-end acceptance checks, one test per numbered criterion.

Each test records a PASS/FAIL line that is printed in the terminal
summary. Runtime budgets are part of the verdict.
"""

from __future__ import annotations

import hashlib
import math
import random
import time
from pathlib import Path

import numpy as np
import pytest

from msnc import blc
from msnc.circuits import msnc_netlist
from msnc.diode import (
    SMS7621,
    gd_static,
    id_static,
    junction_cap,
    junction_cap_deriv,
    large_signal_extract,
    small_signal_impedance,
)
from msnc.pipeline import build_config, resolve_document, run_scenario
from msnc.pipeline import scenarios as sc
from msnc.steady import ExcitationSpec, phase_spread, power_sweep, saturation_knee, transmission_null
from msnc.synth import DesignConfig, SubstrateParams, design_matching_networks

F0 = 680e6
pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def cfg():
    return build_config(resolve_document({}))


@pytest.fixture(scope="module")
def sweep(cfg):
    """Full-circuit single-tone sweep over the default grid, shared by 7, 8 and 9."""
    t0 = time.perf_counter()
    rows = power_sweep(msnc_netlist(sc._design(cfg)), cfg.freq_hz, cfg.power_grid_dbm, cfg.solver,
                       reverse=False, thresholds=cfg.thresholds, jobs=cfg.jobs)
    return rows, time.perf_counter() - t0


def test_c01_matched_anchor(verdict):
    check = verdict(1)
    t0 = time.perf_counter()
    sol = blc.solve_za_for_k(1.0)
    dt = time.perf_counter() - t0
    ok = (abs(sol.z_ae.real - 50) <= 1 and abs(sol.z_ao.real - 50) <= 1
          and abs(sol.z_ae.imag) <= 2 and abs(sol.z_ao.imag) <= 2 and dt < 1.0)
    check(ok, f"Z_Ae={sol.z_ae:.3f} Z_Ao={sol.z_ao:.3f} in {dt:.2f} s")
    assert ok


def test_c02_curve_fit(verdict):
    check = verdict(2)
    t0 = time.perf_counter()
    ks = np.round(np.arange(0.05, 1.0 + 1e-9, 0.01), 10)
    fit = blc.refit(ks, [blc.solve_za_for_k(k) for k in ks])
    dt = time.perf_counter() - t0
    rel_r = [abs(a - b) / abs(b) for a, b in zip(fit.real_poly, blc.FIT_REAL)]
    rel_i = [abs(a - b) / abs(b) for a, b in zip(fit.imag_poly, blc.FIT_IMAG)]
    coeffs_ok = max(rel_r) <= 0.15 and max(rel_i) <= 0.20
    points_ok = max(fit.max_dev_real, fit.max_dev_imag) <= 5.0
    ok = coeffs_ok and points_ok and dt < 10
    check(ok, f"real rel dev {np.round(rel_r, 3).tolist()}, imag rel dev {np.round(rel_i, 3).tolist()}, "
              f"pointwise {fit.max_dev_real:.2f}/{fit.max_dev_imag:.2f} ohm in {dt:.1f} s")
    assert ok


def test_c03_s_versus_k(verdict):
    check = verdict(3)
    t0 = time.perf_counter()
    rows = blc.s_params_vs_k(blc.default_k_grid())
    dt = time.perf_counter() - t0
    worst_s11 = max(r["s11_db"] for r in rows)
    top, bottom = rows[-1], rows[0]
    ok = (worst_s11 < -10 and math.isclose(top["k"], 1.0) and math.isclose(bottom["k"], 0.02)
          and abs(top["s21_db"] + 3) <= 0.3 and abs(top["s31_db"] + 3) <= 0.3
          and bottom["s41_db"] >= -0.5 and dt < 10)
    check(ok, f"worst S11 {worst_s11:.1f} dB, S21/S31 at k=1 {top['s21_db']:.3f}/{top['s31_db']:.3f} dB, "
              f"S41 at k=0.02 {bottom['s41_db']:.3f} dB in {dt:.1f} s")
    assert ok


def test_c04_textbook_limit(verdict):
    check = verdict(4)
    amps = np.array(blc.port_amplitudes(blc.coefficients(50.0, 50.0)))
    want = np.array([0, -1j / math.sqrt(2), -1 / math.sqrt(2), 0])
    err = float(np.max(np.abs(amps - want)))
    ok = err <= 1e-6
    check(ok, f"max amplitude error {err:.2e}")
    assert ok


def test_c05_diode_limits(verdict):
    check = verdict(5)
    t0 = time.perf_counter()
    low = large_signal_extract(ExcitationSpec.single(F0, -60.0)).z_d
    z_ss = small_signal_impedance(0.0, F0)
    rel = abs(low - z_ss) / abs(z_ss)
    mags = [abs(large_signal_extract(ExcitationSpec.single(F0, float(p))).z_d) for p in range(-40, 21)]
    dt = time.perf_counter() - t0
    monotone = all(b <= a * (1 + 1e-9) for a, b in zip(mags, mags[1:]))
    ok = rel <= 0.01 and monotone and mags[-1] < 10 * SMS7621.r_s and dt < 120
    check(ok, f"-60 dBm rel dev {rel:.2e}, monotone {monotone}, |Z_D|(+20 dBm) {mags[-1]:.1f} ohm "
              f"in {dt:.0f} s")
    assert ok


def test_c06_derivatives(verdict):
    check = verdict(6)
    rng = random.Random(6)
    h = 1e-6
    worst = 0.0
    for _ in range(20):
        v = rng.uniform(-1.5, 0.6)
        for f, df in ((id_static, gd_static), (junction_cap, junction_cap_deriv)):
            fd = (f(v + h) - f(v - h)) / (2 * h)
            worst = max(worst, abs(df(v) - fd) / max(abs(fd), 1e-12))
    ok = worst <= 1e-4
    check(ok, f"worst relative mismatch {worst:.2e} over 20 points")
    assert ok


def test_c07_energy_conservation(verdict, sweep):
    check = verdict(7)
    rows, _ = sweep
    errs = [abs(r["balance_error"]) for r in rows if r["converged"]]
    ok = bool(errs) and max(errs) <= 0.01
    check(ok, f"{len(errs)}/{len(rows)} converged, worst balance error {max(errs, default=math.nan):.2e}")
    assert ok


def test_c08_efficiency_envelope(verdict, sweep):
    check = verdict(8)
    rows, dt = sweep
    best = max(rows, key=lambda r: r["eta"])
    ok = -20 <= best["p_in_dbm"] <= 0 and 0.5 <= best["eta"] <= 0.85 and dt < 600
    check(ok, f"peak eta {best['eta']:.3f} at {best['p_in_dbm']:+.0f} dBm, sweep {dt:.0f} s")
    assert ok


def test_c09_transmission_null(verdict, sweep, cfg):
    check = verdict(9)
    rows, _ = sweep
    null = transmission_null(rows, cfg.thresholds)
    by_p = {r["p_in_dbm"]: r["s21_db"] for r in rows}
    ends_ok = by_p[-40.0] > -1 and by_p[10.0] > -1
    ok = null["unique"] and null["in_power_saving_band"] and ends_ok
    check(ok, f"null at {null['p_null_dbm']:+.0f} dBm (unique {null['unique']}), "
              f"S21 {by_p[-40.0]:.2f} dB at -40 dBm, {by_p[10.0]:.2f} dB at +10 dBm")
    assert ok


def test_c10_multitone(verdict, cfg):
    check = verdict(10)
    mt = cfg.multitone
    rows = sc._multitone_rows(cfg, (1, 3, 5), mt.p_total_w, (0.0,))
    knees = {n: saturation_knee([r["p_in_total_w"] for r in rows if r["n_tones"] == n],
                                [r["p_dc_w"] for r in rows if r["n_tones"] == n]) for n in (1, 3, 5)}
    spread = phase_spread(sc._multitone_rows(cfg, (3,), (mt.phase_p_total_w,), mt.phases_deg))
    ok = knees[5] < knees[3] < knees[1] and spread < 0.05
    check(ok, "knees " + ", ".join(f"{n}-tone {knees[n] * 1e6:.0f} uW" for n in (1, 3, 5))
          + f" (published 3/5-tone 60/130 uW), phase spread {spread:.2%}")
    assert ok


def test_c11_ga_goal(verdict):
    check = verdict(11)
    t0 = time.perf_counter()
    _, _, rep = design_matching_networks(SubstrateParams(), DesignConfig())
    dt = time.perf_counter() - t0
    mid = [d["s11_db"] for d in rep.evaluation["drives"] if d["p_dbm"] == -10.0]
    ok = rep.goal_met and rep.ga.evaluations <= 1000 and dt < 1800
    check(ok, f"S11 at -10 dBm {mid[0]:.1f} dB after {rep.ga.evaluations} evaluations, cost {rep.cost:.4f}, "
              f"{dt / 60:.1f} min")
    assert ok


def _digests(out: Path) -> dict[str, str]:
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(out.iterdir()) if p.name != "timing.json"}


def test_c12_determinism(verdict, tmp_path):
    check = verdict(12)
    runs = {"fig4": {}, "fig7": {"diode_sweep": {"power_grid_dbm": [-40, -10, 10], "frequencies_hz": [680e6]}},
            "fig15-phase": {"multitone": {"phases_deg": [0, 45]}}}
    same = {}
    for name, over in runs.items():
        cfg = build_config(resolve_document(over, scenario=name))
        a, b = tmp_path / name / "a", tmp_path / name / "b"
        run_scenario(cfg, a)
        run_scenario(cfg, b)
        da, db = _digests(a), _digests(b)
        same[name] = bool(da) and da == db
    ok = all(same.values())
    check(ok, "byte-identical reruns: " + ", ".join(f"{k} {v}" for k, v in same.items()))
    assert ok
