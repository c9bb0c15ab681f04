from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msnc.diode import (
    FC,
    SMS7621,
    DiodeParams,
    antiparallel_current,
    gd_static,
    id_static,
    junction_cap,
    junction_cap_deriv,
    junction_charge,
    large_signal_extract,
    small_signal_admittance,
    small_signal_impedance,
)
from msnc.steady import ExcitationSpec

K_B, Q_E = 1.380649e-23, 1.602176634e-19
volts = st.floats(-2.9, 0.6)


def _alpha(temp: float) -> float:
    return Q_E / (1.05 * K_B * temp)


def test_zero_bias_current_is_zero():
    assert id_static(0.0) == 0.0


@pytest.mark.parametrize("temp", [298.15, 320.0])
def test_forward_current_oracle(temp):
    p = DiodeParams(temperature=temp)
    want = 4e-8 * (math.exp(_alpha(temp) * 0.2) - 1)
    assert id_static(0.2, p) == pytest.approx(want, rel=1e-9)
    if temp == 298.15:
        assert id_static(0.2, p) == pytest.approx(6.6e-5, rel=0.05)


def test_reverse_saturation_floor():
    assert id_static(-0.2) == pytest.approx(-4e-8, rel=1e-2)


def test_breakdown_conducts_strongly():
    assert id_static(-3.3) < -1e-3
    assert id_static(-3.3) < id_static(-3.0) < id_static(-2.0)


def test_capacitance_values():
    assert junction_cap(0.0) == pytest.approx(1e-13)
    assert junction_cap(-0.51) == pytest.approx(1e-13 / math.sqrt(2))
    assert math.isfinite(junction_cap(0.9 * 0.51))


def test_capacitance_knee_is_c1():
    knee = FC * SMS7621.v_j
    lo, hi = junction_cap(knee - 1e-9), junction_cap(knee + 1e-9)
    assert abs(hi - lo) / lo < 1e-7
    dlo, dhi = junction_cap_deriv(knee - 1e-9), junction_cap_deriv(knee + 1e-9)
    assert abs(dhi - dlo) / dlo < 1e-6


@given(v=volts)
def test_conductance_matches_finite_difference(v):
    h = 1e-6
    fd = (id_static(v + h) - id_static(v - h)) / (2 * h)
    assert gd_static(v) == pytest.approx(fd, rel=1e-4, abs=1e-12)


@given(v=volts)
def test_capacitance_derivative_matches_finite_difference(v):
    h = 1e-6
    fd = (junction_cap(v + h) - junction_cap(v - h)) / (2 * h)
    assert junction_cap_deriv(v) == pytest.approx(fd, rel=1e-4)


@given(v=volts)
def test_charge_is_integral_of_capacitance(v):
    h = 1e-6
    fd = (junction_charge(v + h) - junction_charge(v - h)) / (2 * h)
    assert junction_cap(v) == pytest.approx(fd, rel=1e-5)


@given(v=st.floats(-2.0, 2.0))
def test_antiparallel_pair_is_odd(v):
    a, b = antiparallel_current(v), antiparallel_current(-v)
    assert abs(a + b) <= 1e-12 * max(abs(a), 1e-30)


@given(a=volts, b=volts)
def test_current_is_monotone(a, b):
    lo, hi = sorted((a, b))
    assert id_static(lo) <= id_static(hi)


def test_small_signal_zero_bias():
    y = small_signal_admittance(0.0, 680e6)
    assert y.real == pytest.approx(_alpha(298.15) * 4e-8, rel=1e-6)
    assert y.imag == pytest.approx(2 * math.pi * 680e6 * 1e-13, rel=1e-9)


def test_small_signal_limits():
    assert small_signal_admittance(0.0, 1e-3).imag == pytest.approx(0.0, abs=1e-15)
    assert abs(small_signal_impedance(0.45, 680e6)) == pytest.approx(12.0, rel=0.02)


@pytest.mark.parametrize("bad", [{"i_s": 0}, {"n": 0.5}, {"v_j": 2.5}, {"temperature": -1}])
def test_invalid_params(bad):
    with pytest.raises(ValueError):
        DiodeParams(**bad)


def test_large_signal_small_drive_limit():
    pt = large_signal_extract(ExcitationSpec.single(680e6, -60.0))
    z0 = small_signal_impedance(0.0, 680e6)
    assert abs(pt.z_d - z0) / abs(z0) < 0.01
    assert pt.z_d.real >= 0


def test_large_signal_high_drive_near_short():
    pt = large_signal_extract(ExcitationSpec.single(680e6, 20.0))
    assert abs(pt.z_d) < 10 * SMS7621.r_s


def test_bank_admittance_is_four_diodes():
    pt = large_signal_extract(ExcitationSpec.single(680e6, -40.0), "antiparallel-pair")
    assert pt.y_bank == 4 * pt.y_d
    assert pt.y_d == pytest.approx(small_signal_admittance(0.0, 680e6), rel=0.02)


def test_extract_rejects_multitone():
    with pytest.raises(ValueError):
        large_signal_extract(ExcitationSpec.multitone(3, 1e-4))


def test_vectorized_evaluation():
    v = np.linspace(-1, 0.5, 7)
    assert np.allclose(id_static(v), [id_static(x) for x in v])
