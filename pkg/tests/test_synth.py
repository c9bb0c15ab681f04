from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import constants

from msnc.netalg import TwoPortAbcd, series_abcd, tline_abcd
from msnc.synth import (
    GENES,
    PUBLISHED_NETWORKS,
    DesignConfig,
    GaConfig,
    MnGeometry,
    ParameterError,
    StubTopology,
    SubstrateParams,
    evaluate_design,
    ga_optimize,
    loading_chain_abcd,
    microstrip_analyze,
    microstrip_synthesize,
    radial_stub_admittance,
    stub_network_abcd,
    topology_to_vector,
    vector_to_topology,
    z_a_from_chain,
)

F = 680e6
SUB = SubstrateParams()


def _wheeler_width(z0: float, eps_r: float, h: float) -> float:
    """Closed-form microstrip synthesis (narrow and wide strip forms)."""
    a = z0 / 60 * math.sqrt((eps_r + 1) / 2) + (eps_r - 1) / (eps_r + 1) * (0.23 + 0.11 / eps_r)
    u = 8 * math.exp(a) / (math.exp(2 * a) - 2)
    if u > 2:
        b = 377 * math.pi / (2 * z0 * math.sqrt(eps_r))
        u = 2 / math.pi * (b - 1 - math.log(2 * b - 1)
                           + (eps_r - 1) / (2 * eps_r) * (math.log(b - 1) + 0.39 - 0.61 / eps_r))
    return u * h


def _eps_eff_simple(w: float, eps_r: float, h: float) -> float:
    return (eps_r + 1) / 2 + (eps_r - 1) / 2 / math.sqrt(1 + 12 * h / w)


def test_fifty_ohm_width_oracle():
    w_oracle = _wheeler_width(50.0, 3.55, 1.52e-3)
    assert 3.3e-3 <= w_oracle <= 3.5e-3
    w, _, _ = microstrip_synthesize(50.0, SUB, F)
    assert 3.3e-3 <= w <= 3.5e-3
    assert w == pytest.approx(w_oracle, rel=0.03)


def test_quarter_wave_length_oracle():
    w, ee, lam = microstrip_synthesize(50.0, SUB, F)
    lam_oracle = constants.c / (F * math.sqrt(_eps_eff_simple(w, 3.55, 1.52e-3)))
    assert 64e-3 <= lam / 4 <= 69e-3
    assert lam / 4 == pytest.approx(lam_oracle / 4, rel=0.02)


@pytest.mark.parametrize("z", [35.36, 50.0, 70.7])
def test_synthesis_round_trip(z):
    w, ee, _ = microstrip_synthesize(z, SUB, F)
    z_back, ee_back = microstrip_analyze(w, SUB)
    assert z_back == pytest.approx(z, rel=5e-3)
    assert ee_back == pytest.approx(ee)


@pytest.mark.parametrize("z", [5.0, 200.0])
def test_synthesis_range(z):
    with pytest.raises(ParameterError):
        microstrip_synthesize(z, SUB, F)


def test_substrate_invariants():
    with pytest.raises(ParameterError):
        SubstrateParams(eps_r=1.0)
    with pytest.raises(ParameterError):
        SubstrateParams(h=0.0)


def test_empty_network_is_identity():
    net = stub_network_abcd(MnGeometry(1e-3, 0.0), SUB, F)
    assert np.allclose(net.matrix, np.eye(2))


def test_narrow_sector_tends_to_uniform_open_stub():
    w, r = 1.0e-3, 20e-3
    y = radial_stub_admittance(w, r, 1e-4, SUB, F)
    z0, ee = microstrip_analyze(w, SUB)
    th = 2 * math.pi * F * math.sqrt(ee) * r / constants.c
    assert y == pytest.approx(1j * math.tan(th) / z0, rel=0.02)


@pytest.mark.parametrize("net", [PUBLISHED_NETWORKS.mn1, PUBLISHED_NETWORKS.mn2])
def test_stub_discretization_converges(net):
    for r, a in ((net.r1, net.alpha1), (net.r2, net.alpha2)):
        if r == 0 or a == 0:
            continue
        y32 = radial_stub_admittance(net.w, r, a, SUB, F, 32)
        y64 = radial_stub_admittance(net.w, r, a, SUB, F, 64)
        assert abs(y64 - y32) / abs(y64) < 0.01


def test_geometry_invariants():
    with pytest.raises(ParameterError):
        MnGeometry(-1e-3, 1e-3)
    with pytest.raises(ParameterError):
        MnGeometry(0.0, 1e-3)
    back = StubTopology.from_dict(PUBLISHED_NETWORKS.to_dict())
    assert np.allclose(topology_to_vector(back), topology_to_vector(PUBLISHED_NETWORKS), rtol=1e-12)


def test_chain_identity_and_series():
    i = TwoPortAbcd.identity(F)
    assert np.allclose(loading_chain_abcd(i, 0j, i, 0j).matrix, np.eye(2))
    assert np.allclose(loading_chain_abcd(i, 0j, i, 12.0).matrix, [[1, 12], [0, 1]])


finite = st.floats(-100, 100)


@given(y=st.builds(complex, finite, finite), zd=st.builds(complex, finite, finite),
       z1=st.floats(20, 120), t1=st.floats(0.1, 3), z2=st.floats(20, 120), t2=st.floats(0.1, 3))
def test_chain_is_unimodular(y, zd, z1, t1, z2, t2):
    ch = loading_chain_abcd(tline_abcd(z1, t1, F), y / 1000, tline_abcd(z2, t2, F), zd)
    assert abs(ch.det - 1) < 1e-9


@given(z=st.builds(complex, finite, finite))
def test_odd_mode_of_series_chain_is_series_value(z):
    assert z_a_from_chain(series_abcd(z, F), "odd", 11e3, 100e-9, F) == pytest.approx(z)


def test_even_mode_identity_chain_is_capacitor():
    z = z_a_from_chain(TwoPortAbcd.identity(F), "even", 11e3, 100e-9, F)
    assert abs(z) == pytest.approx(1 / (2 * math.pi * F * 100e-9), rel=1e-3)


def test_z_a_rejects_bad_mode():
    with pytest.raises(ParameterError):
        z_a_from_chain(TwoPortAbcd.identity(F), "common", 11e3, 1e-7, F)


def _sphere(x):
    return float(np.sum(np.asarray(x) ** 2))


SPHERE = GaConfig(bounds=((-5, 5),) * 4, seed=0)


def test_ga_sphere():
    res = ga_optimize(_sphere, SPHERE)
    assert res.best_cost < 1e-2
    assert res.evaluations <= 1000


def test_ga_is_deterministic():
    a = ga_optimize(_sphere, SPHERE)
    b = ga_optimize(_sphere, SPHERE)
    assert a.history == b.history
    assert np.array_equal(a.best_params, b.best_params)


def test_ga_stops_at_target():
    cfg = GaConfig(bounds=((-5, 5),) * 2, target_cost=1e-6, seed=1)
    res = ga_optimize(_sphere, cfg, initial=[[0.0, 0.0]])
    assert res.reached_target and res.evaluations == cfg.population
    assert res.best_cost == 0.0


@given(seed=st.integers(0, 2**32 - 1))
def test_ga_respects_bounds(seed):
    cfg = GaConfig(bounds=((0, 1), (-2, -1)), population=6, max_trials=30, seed=seed)
    res = ga_optimize(lambda x: -float(np.sum(x)), cfg, initial=[[5.0, 5.0]])
    assert 0 <= res.best_params[0] <= 1 and -2 <= res.best_params[1] <= -1
    assert all(h["diversity"] >= 0 for h in res.history)


def test_ga_penalizes_non_finite_cost():
    res = ga_optimize(lambda x: math.nan, GaConfig(bounds=((0, 1),), population=4, max_trials=8))
    assert res.best_cost == 1e6


@pytest.mark.parametrize("kw", [{"population": 2}, {"max_trials": 3}, {"crossover_rate": 2.0},
                                {"bounds": ((1, 0),)}])
def test_ga_config_validation(kw):
    with pytest.raises(ValueError):
        GaConfig(**{"bounds": ((0, 1),), **kw})


def test_vector_round_trip():
    x = topology_to_vector(PUBLISHED_NETWORKS)
    assert len(x) == len(GENES)
    back = vector_to_topology(x)
    assert np.allclose(topology_to_vector(back), x)


def test_design_config_requires_all_bands():
    errs = DesignConfig(drives_dbm=(-10.0,)).validate()
    assert errs and "Rx" in errs[0] and "Tx" in errs[0]
    assert DesignConfig().validate() == []


def test_published_seed_scores_finite():
    ev = evaluate_design(PUBLISHED_NETWORKS, SUB, DesignConfig())
    assert math.isfinite(ev["cost"])
    assert [d["p_dbm"] for d in ev["drives"]] == [-40.0, -10.0, 10.0]
