from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msnc.circuits import half_wave_rectifier, rc_lowpass
from msnc.steady import (
    CircuitNetlist,
    ExcitationSpec,
    Mode,
    ModeThresholds,
    NetlistError,
    Port,
    SolverConfig,
    UndefinedEfficiencyError,
    classify_mode,
    efficiency,
    integrate_to_steady,
    multitone_study,
    phase_spread,
    power_sweep,
    saturation_knee,
    transmission_null,
)
from msnc.steady.netlist import c, r, src

F = 680e6


def _v_oc(p_dbm: float, z: float = 50.0) -> float:
    return math.sqrt(8 * z * 1e-3 * 10 ** (p_dbm / 10))


def test_rc_lowpass_matches_analytic_transfer():
    res = integrate_to_steady(rc_lowpass(50.0, 100e-9), ExcitationSpec.single(F, 0.0))
    v, _ = res.fundamental_phasors["P1"]
    h = 1 / (1 + 2j * math.pi * F * 50.0 * 100e-9)
    assert abs(v) == pytest.approx(_v_oc(0.0) * abs(h), rel=1e-3)
    assert res.converged


def test_zero_drive_gives_zero_waveforms():
    net = half_wave_rectifier(c_f=1e-9)
    res = integrate_to_steady(net, ExcitationSpec.single(F, -math.inf))
    assert res.p_dc == 0.0
    assert not np.any(res.node_waveforms)


def test_energy_balance_rectifier():
    res = integrate_to_steady(half_wave_rectifier(), ExcitationSpec.single(F, -10.0))
    assert res.converged
    assert abs(res.energy["balance_error"]) < 0.01


def test_acceleration_agrees_with_brute_force():
    net = half_wave_rectifier(c_f=1e-9)
    exc = ExcitationSpec.single(F, 0.0)
    fast = integrate_to_steady(net, exc)
    slow = integrate_to_steady(net, exc, SolverConfig(accelerate=False, max_cycles=20000))
    assert slow.converged and fast.converged
    assert fast.v_dc == pytest.approx(slow.v_dc, rel=0.01)
    assert fast.cycles_used < slow.cycles_used


def test_linear_circuit_scales_quadratically():
    net = CircuitNetlist(("a", "b"), (src("SRC", "a"), r("R1", "a", "b", 30.0), r("R2", "b", "0", 100.0),
                                      c("C1", "b", "0", 1e-12)),
                         (Port("P1", "a", ("SRC",)),), load="R2")
    lo = integrate_to_steady(net, ExcitationSpec.single(F, -10.0))
    hi = integrate_to_steady(net, ExcitationSpec.single(F, -10.0 + 20 * math.log10(2)))
    assert hi.p_in_avg / lo.p_in_avg == pytest.approx(4.0, rel=1e-6)
    assert hi.energy["p_dissipated"] / lo.energy["p_dissipated"] == pytest.approx(4.0, rel=1e-6)


def test_timestep_halving_changes_little():
    net = half_wave_rectifier()
    exc = ExcitationSpec.single(F, -10.0)
    a = integrate_to_steady(net, exc, SolverConfig(samples_per_period=256))
    b = integrate_to_steady(net, exc, SolverConfig(samples_per_period=512))
    assert b.p_dc == pytest.approx(a.p_dc, rel=2e-3)


@settings(max_examples=6)
@given(p=st.floats(-30.0, 10.0))
def test_passive_rectifier_efficiency_at_most_one(p):
    res = integrate_to_steady(half_wave_rectifier(), ExcitationSpec.single(F, p),
                              SolverConfig(record_nodes=False))
    assert 0.0 <= efficiency(res) <= 1.0


def test_efficiency_of_unloaded_circuit_is_zero():
    res = integrate_to_steady(rc_lowpass(), ExcitationSpec.single(F, -10.0))
    assert efficiency(res) == 0.0


def test_efficiency_undefined_without_input():
    res = integrate_to_steady(rc_lowpass(), ExcitationSpec.single(F, -math.inf))
    with pytest.raises(UndefinedEfficiencyError):
        efficiency(res)


def test_single_tone_multitone_matches_single():
    net = half_wave_rectifier()
    p_w = 1e-4
    row = multitone_study(net, [1], [p_w])[0]
    res = integrate_to_steady(net, ExcitationSpec.single(F, 10 * math.log10(p_w / 1e-3)),
                              SolverConfig(record_nodes=False))
    assert row["p_dc_w"] == pytest.approx(res.p_dc, rel=1e-12)


def test_multitone_common_period():
    exc = ExcitationSpec.multitone(3, 1e-4, F, 1e6, 45.0)
    assert exc.common_period() == pytest.approx(1e-6)
    assert [t.phase for t in exc.tones] == [0.0, 45.0, 90.0]
    assert exc.p_avail_w == pytest.approx(1e-4)


def test_incommensurable_tones_rejected():
    from msnc.steady import Tone

    exc = ExcitationSpec((Tone(F, -10.0), Tone(F * math.sqrt(2), -10.0)))
    with pytest.raises(NetlistError):
        exc.common_period()


@pytest.mark.parametrize("p, mode", [(-30, Mode.RX), (-10, Mode.POWER_SAVING), (10, Mode.TX),
                                     (2, Mode.TRANSITION), (-25, Mode.POWER_SAVING), (5, Mode.TX)])
def test_classify_mode(p, mode):
    assert classify_mode(p) == mode


def test_thresholds_must_be_ordered():
    with pytest.raises(ValueError):
        ModeThresholds(0.0, -25.0, 5.0)


@given(p=st.floats(-60, 30))
def test_every_power_has_exactly_one_mode(p):
    assert classify_mode(p) in set(Mode)


def test_power_sweep_rejects_bad_grids():
    with pytest.raises(ValueError):
        power_sweep(half_wave_rectifier(), F, [])
    with pytest.raises(ValueError):
        power_sweep(half_wave_rectifier(), F, [-60.0])


def test_power_sweep_rows():
    rows = power_sweep(half_wave_rectifier(), F, [-20.0, -10.0])
    assert [r["mode"] for r in rows] == ["PowerSaving", "PowerSaving"]
    assert rows[1]["p_dc_w"] > rows[0]["p_dc_w"] > 0
    assert math.isnan(rows[0]["s21_db"])


def test_transmission_null_synthetic():
    p = np.arange(-40, 11, 1.0)
    s = -0.5 - 20 * np.exp(-((p + 8) / 4) ** 2)
    out = transmission_null([{"p_in_dbm": a, "s21_db": b} for a, b in zip(p, s)])
    assert out["p_null_dbm"] == -8.0 and out["unique"] and out["in_power_saving_band"]


def test_saturation_knee_is_efficiency_peak():
    # eta = x exp(-x) in x = ln p peaks at x = 1
    p = np.exp(np.linspace(0.2, 2.0, 10))
    x = np.log(p)
    knee = saturation_knee(p, p * x * np.exp(-x))
    assert knee == pytest.approx(math.e, rel=0.02)


def test_saturation_knee_edges():
    p = np.array([1.0, 2.0, 4.0, 8.0])
    assert saturation_knee(p, p * np.array([4, 3, 2, 1.0])) == 1.0
    assert saturation_knee(p, p * np.array([1, 2, 3, 4.0])) == 8.0
    with pytest.raises(ValueError):
        saturation_knee([0.0, 1.0], [0.0, 1.0])


def test_phase_spread():
    assert phase_spread([{"p_dc_w": 1.0}, {"p_dc_w": 1.1}, {"p_dc_w": 0.9}]) == pytest.approx(0.2)
