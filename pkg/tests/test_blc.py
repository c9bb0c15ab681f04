from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from msnc import blc

SQ2 = math.sqrt(2)
passive = st.builds(complex, st.floats(0.0, 300.0), st.floats(-300.0, 300.0))


def test_matched_terminations_give_textbook_split():
    amps = blc.port_amplitudes(blc.coefficients(50.0, 50.0))
    assert np.allclose(amps, (0, -1j / SQ2, -1 / SQ2, 0), atol=1e-6)


def test_half_circuit_matrices_are_unimodular():
    for m in blc.even_odd_abcd():
        assert abs(m.det - 1) < 1e-12


def test_k1_matched_anchor():
    sol = blc.solve_za_for_k(1.0)
    assert abs(sol.z_ae.real - 50) <= 1 and abs(sol.z_ao.real - 50) <= 1
    assert abs(sol.z_ae.imag) <= 2 and abs(sol.z_ao.imag) <= 2
    assert sol.residual <= blc.RESIDUAL_TOL


@pytest.mark.parametrize("k", [0.05, 0.3, 0.7, 1.0])
def test_solutions_hit_targets(k):
    sol = blc.solve_za_for_k(k)
    ta2, ta3 = blc.target_amplitudes(k)
    assert abs(sol.a2 - ta2) < 1e-6 and abs(sol.a3 - ta3) < 1e-6
    assert sol.z_ae.real >= 0 and sol.z_ao.real >= 0


def test_k_out_of_range():
    for k in (0.0, -0.1, 1.2):
        with pytest.raises(blc.BlcError):
            blc.solve_za_for_k(k)


def test_fit_at_k1_is_near_50_ohm():
    ze, zo = blc.evaluate_fit(1.0)
    assert ze.real == pytest.approx(48.9)
    assert ze == pytest.approx(zo.conjugate())


def test_refit_tracks_published_curve_pointwise():
    ks = np.round(np.arange(0.05, 1.0001, 0.05), 10)
    fit = blc.refit(ks, [blc.solve_za_for_k(k) for k in ks])
    assert max(fit.max_dev_real, fit.max_dev_imag) <= 5.0


def test_s_params_vs_k_columns():
    rows = blc.s_params_vs_k([0.5, 1.0])
    assert rows[1]["s21_db"] == pytest.approx(-3.0103, abs=0.01)
    assert set(rows[0]) >= {"k", "re_zae", "s11_db", "s41_db"}


@given(z=passive)
def test_equal_loads_leave_port1_matched(z):
    amps = blc.port_amplitudes(blc.coefficients(z, z))
    assert abs(amps[0]) < 1e-9


@given(ze=passive, zo=passive)
def test_reactive_terminations_conserve_power(ze, zo):
    """Lossless coupler with purely reactive terminations returns all power."""
    amps = blc.port_amplitudes(blc.coefficients(complex(0, ze.imag), complex(0, zo.imag),
                                                blc.BlcSpec(t_form="standard")))
    assert abs(amps[0]) ** 2 + abs(amps[3]) ** 2 == pytest.approx(1.0, abs=1e-9)


@given(ze=passive, zo=passive)
def test_passive_terminations_never_create_power(ze, zo):
    amps = blc.port_amplitudes(blc.coefficients(ze, zo))
    assert abs(amps[0]) ** 2 + abs(amps[3]) ** 2 <= 1 + 1e-9
