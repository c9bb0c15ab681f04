"""Matching-network synthesis for the node circuit.

Two stages. A frequency-domain presynthesis fits the stub geometry so that
the loading chain, with the rectifier's large-signal impedance at the
mid drive, is matched to the coupler and holds the clamp-bank node at a
chosen impedance level. The GA then refines the geometry against full
time-domain simulation of the chain at low, mid and high drive.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq, least_squares

from .. import blc
from ..circuits import MsncDesign, branch_netlist, pi_abcd, pi_elements
from ..diode import SMS7621, DiodeParams, small_signal_impedance
from ..netalg import input_impedance, reflection, series_abcd
from ..steady import (
    ConvergenceError,
    ExcitationSpec,
    ModeThresholds,
    SolverConfig,
    classify_mode,
    integrate_to_steady,
)
from ..steady.analysis import Mode
from ..steady.netlist import CircuitNetlist, Port, c, diode, r, src
from .ga import GaConfig, GaResult, ga_optimize
from .microstrip import ParameterError, SubstrateParams
from .stubs import PUBLISHED_NETWORKS, MnGeometry, StubTopology, loading_chain_abcd, stub_network_abcd

log = logging.getLogger(__name__)

GENES = ("mn1.w", "mn1.l", "mn1.r1", "mn1.r2", "mn1.alpha1", "mn1.alpha2",
         "mn2.w", "mn2.l", "mn2.r1", "mn2.alpha1")

# millimetres and degrees
DEFAULT_BOUNDS = {
    "mn1.w": (0.25, 6.0), "mn1.l": (0.5, 140.0), "mn1.r1": (0.0, 40.0), "mn1.r2": (0.0, 40.0),
    "mn1.alpha1": (10.0, 120.0), "mn1.alpha2": (10.0, 120.0),
    "mn2.w": (0.25, 6.0), "mn2.l": (0.5, 140.0), "mn2.r1": (0.0, 40.0), "mn2.alpha1": (10.0, 120.0),
}

FAIL_COST = 10.0
FIDELITY_NOTE = ("stub attachment points and interconnects are not dimensioned; the feed line "
                 "is the only series element between the two stubs of a network")


@dataclass(frozen=True)
class DesignConfig:
    freq: float = 680e6
    z0: float = 50.0
    r_load: float = 11e3
    c_rect: float = 100e-9
    line_loss: float = 2e-3
    diode: DiodeParams = SMS7621
    # total available power at the antenna port; each chain receives half
    drives_dbm: tuple[float, ...] = (-40.0, -10.0, 10.0)
    thresholds: ModeThresholds = ModeThresholds()
    k_high: float = 1.0
    k_low: float = 0.05
    w_impedance: float = 1.0
    w_s11: float = 1.0
    w_efficiency: float = 1.0
    s11_goal_db: float = -10.0
    node_impedance: float = 300.0
    bounds: tuple[tuple[float, float], ...] = tuple(DEFAULT_BOUNDS[g] for g in GENES)
    population: int = 40
    max_trials: int = 1000
    seed: int = 0
    solver: SolverConfig = SolverConfig(samples_per_period=128, record_nodes=False)
    presynthesis_starts: int = 12

    def validate(self) -> list[str]:
        errs = []
        modes = {classify_mode(p, self.thresholds) for p in self.drives_dbm}
        missing = {Mode.RX, Mode.POWER_SAVING, Mode.TX} - modes
        if missing:
            errs.append("drive grid must cover the Rx, PowerSaving and Tx bands; missing "
                        + ", ".join(sorted(m.value for m in missing)))
        if any(not -50 <= p <= 15 for p in self.drives_dbm):
            errs.append("drive levels must lie in [-50, 15] dBm")
        if len(self.bounds) != len(GENES):
            errs.append(f"bounds need {len(GENES)} entries")
        if not 0 <= self.k_low < self.k_high <= 1:
            errs.append("need 0 <= k_low < k_high <= 1")
        for name in ("w_impedance", "w_s11", "w_efficiency"):
            if getattr(self, name) < 0:
                errs.append(f"{name} must be non-negative")
        if not self.node_impedance > 0:
            errs.append("node_impedance must be positive")
        return errs

    def ga_config(self) -> GaConfig:
        return GaConfig(bounds=self.bounds, population=self.population,
                        max_trials=self.max_trials, seed=self.seed)


def vector_to_topology(x) -> StubTopology:
    v = dict(zip(GENES, (float(t) for t in x)))
    mm = 1e-3
    mn1 = MnGeometry(v["mn1.w"] * mm, v["mn1.l"] * mm, v["mn1.r1"] * mm, v["mn1.r2"] * mm,
                     v["mn1.alpha1"], v["mn1.alpha2"])
    mn2 = MnGeometry(v["mn2.w"] * mm, v["mn2.l"] * mm, v["mn2.r1"] * mm, 0.0, v["mn2.alpha1"], 0.0)
    return StubTopology(mn1, mn2)


def topology_to_vector(t: StubTopology) -> np.ndarray:
    a, b = t.mn1.to_mm(), t.mn2.to_mm()
    return np.array([a["w_mm"], a["l_mm"], a["r1_mm"], a["r2_mm"], a["alpha1_deg"], a["alpha2_deg"],
                     b["w_mm"], b["l_mm"], b["r1_mm"], b["alpha1_deg"]])


def _circuit(topology: StubTopology, substrate: SubstrateParams, cfg: DesignConfig) -> MsncDesign:
    mn1 = stub_network_abcd(topology.mn1, substrate, cfg.freq)
    mn2 = stub_network_abcd(topology.mn2, substrate, cfg.freq)
    return MsncDesign(mn1, mn2, cfg.freq, cfg.z0, cfg.r_load, cfg.c_rect, cfg.diode, cfg.line_loss)


def _target_k(p_dbm: float, cfg: DesignConfig) -> float:
    mode = classify_mode(p_dbm, cfg.thresholds)
    return cfg.k_high if mode == Mode.POWER_SAVING else cfg.k_low


def evaluate_design(topology: StubTopology, substrate: SubstrateParams, cfg: DesignConfig) -> dict:
    """Simulate one chain at every drive and score it.

    Per drive: the chain reflection rho seen from the coupler (the even and
    odd terminations coincide at the carrier because the reservoir
    capacitor shorts the symmetry plane), the gap between |rho| and the
    reflection magnitude of the target impedances at the drive's k, the
    coupler input match, and the DC efficiency.
    """
    design = _circuit(topology, substrate, cfg)
    net = branch_netlist(design)
    rows = []
    imp, pen = [], []
    eta_mid = []
    for p in cfg.drives_dbm:
        res = integrate_to_steady(net, ExcitationSpec.single(cfg.freq, p - 10 * math.log10(2)),
                                  cfg.solver)
        a, b = res.s_waves("P1", cfg.z0)
        rho = b / a
        z_a = cfg.z0 * (1 + rho) / (1 - rho)
        k = _target_k(p, cfg)
        zt_e, zt_o = blc.evaluate_fit(k)
        # magnitudes only: with equal chains the coupler passes |rho| of the
        # wave on to the transceiver port whatever its phase
        g_t = 0.5 * (abs(reflection(zt_e, cfg.z0)) + abs(reflection(zt_o, cfg.z0)))
        dist = abs(abs(rho) - g_t)
        amps = blc.port_amplitudes(blc.coefficients(z_a, z_a, blc.BlcSpec(cfg.z0, cfg.freq)))
        s11_db = 20 * math.log10(max(abs(amps[0]), 1e-15))
        eta = res.p_dc / res.p_avail
        if classify_mode(p, cfg.thresholds) == Mode.POWER_SAVING:
            eta_mid.append(eta)
        imp.append(dist)
        pen.append(max(0.0, s11_db - cfg.s11_goal_db) / 10.0)
        rows.append({"p_dbm": p, "k_target": k, "rho_db": 20 * math.log10(max(abs(rho), 1e-15)),
                     "k_sim": math.sqrt(max(0.0, 1 - abs(rho) ** 2)), "z_ae": z_a, "z_ao": z_a,
                     "distance": dist, "s11_db": s11_db, "eta": eta, "converged": res.converged})
    eff = 1.0 - (min(eta_mid) if eta_mid else 0.0)
    cost = cfg.w_impedance * float(np.mean(imp)) + cfg.w_s11 * float(np.mean(pen)) + cfg.w_efficiency * eff
    return {"cost": cost, "impedance_term": float(np.mean(imp)), "s11_term": float(np.mean(pen)),
            "efficiency_term": eff, "drives": rows}


class _Objective:
    """Picklable GA objective; any modelling or solver failure costs FAIL_COST."""

    def __init__(self, substrate: SubstrateParams, cfg: DesignConfig):
        self.substrate, self.cfg = substrate, cfg

    def __call__(self, x) -> float:
        try:
            return evaluate_design(vector_to_topology(x), self.substrate, self.cfg)["cost"]
        except (ParameterError, ValueError, ConvergenceError, ZeroDivisionError) as exc:
            log.debug("candidate rejected: %s", exc)
            return FAIL_COST


# presynthesis


def rectifier_impedance(p_absorbed: float, cfg: DesignConfig) -> complex:
    """Fundamental impedance of the series rectifier (diode into C || 2 R_L) absorbing ``p_absorbed`` W."""
    z_s = 5.0
    net = CircuitNetlist(
        ("d", "e"),
        (src("SRC", "d", z_s), diode("SD", "d", "e", cfg.diode), c("C1", "e", "0", cfg.c_rect),
         r("RL", "e", "0", 2 * cfg.r_load)),
        (Port("P1", "d", ("SRC",)),), load="RL")

    def run(p_dbm: float):
        res = integrate_to_steady(net, ExcitationSpec.single(cfg.freq, p_dbm, z_s), cfg.solver)
        return res

    def g(p_dbm: float) -> float:
        return math.log(max(run(p_dbm).p_in_avg, 1e-30) / p_absorbed)

    p = brentq(g, -30.0, 25.0, xtol=0.02)
    v, i = run(p).fundamental_phasors["P1"]
    return complex(v / i)


def _realized(net, cfg: DesignConfig):
    """Lossy ABCD of the time-domain realization of ``net``."""
    return pi_abcd(pi_elements("N", "x", "y", net, cfg.z0, cfg.line_loss), cfg.freq, lossy=True)


def _presynth_residual(u: np.ndarray, lo, hi, z_r: complex, y_d: complex,
                       substrate: SubstrateParams, cfg: DesignConfig) -> np.ndarray:
    topo = vector_to_topology(lo + u * (hi - lo))
    try:
        mn1 = _realized(stub_network_abcd(topo.mn1, substrate, cfg.freq), cfg)
        mn2 = _realized(stub_network_abcd(topo.mn2, substrate, cfg.freq), cfg)
    except (ParameterError, ValueError):
        return np.full(4, 10.0)
    chain = loading_chain_abcd(mn1, y_d, mn2, 0j)
    # unit current into the rectifier
    v_a = chain.a * z_r + chain.b
    i_a = chain.c * z_r + chain.d
    gam = reflection(v_a / i_a, cfg.z0)
    p_in = (v_a * i_a.conjugate()).real
    lost = max(0.0, 1.0 - z_r.real / p_in) if p_in > 0 else 1.0
    y_b = 1.0 / input_impedance(mn2 @ series_abcd(z_r, cfg.freq), 0j)
    level = y_b.real * cfg.node_impedance - 1.0
    return np.array([gam.real, gam.imag, 0.5 * level, math.sqrt(lost)])


def presynthesize(substrate: SubstrateParams, cfg: DesignConfig) -> tuple[StubTopology, dict]:
    """Geometry matching the chain at the mid drive with the bank node near ``node_impedance``."""
    p_mid = [p for p in cfg.drives_dbm if classify_mode(p, cfg.thresholds) == Mode.POWER_SAVING][0]
    p_branch = 1e-3 * 10 ** (p_mid / 10) / 2
    z_r = rectifier_impedance(0.9 * p_branch, cfg)
    y_d = 1.0 / small_signal_impedance(0.0, cfg.freq, cfg.diode)
    lo = np.array([b[0] for b in cfg.bounds])
    hi = np.array([b[1] for b in cfg.bounds])
    rng = np.random.default_rng(cfg.seed)
    starts = [np.clip((topology_to_vector(PUBLISHED_NETWORKS) - lo) / np.where(hi > lo, hi - lo, 1), 0, 1)]
    starts += [rng.random(len(GENES)) for _ in range(cfg.presynthesis_starts - 1)]
    best = None
    for u0 in starts:
        sol = least_squares(_presynth_residual, u0, bounds=(0.0, 1.0),
                            args=(lo, hi, z_r, y_d, substrate, cfg), xtol=1e-12, ftol=1e-12)
        if best is None or sol.cost < best.cost:
            best = sol
    topo = vector_to_topology(lo + best.x * (hi - lo))
    return topo, {"z_rect": z_r, "y_diode": y_d, "residual": float(np.sqrt(2 * best.cost)),
                  "node_impedance": cfg.node_impedance}


@dataclass
class DesignReport:
    topology: StubTopology
    cost: float
    evaluation: dict
    ga: GaResult
    presynthesis: dict
    goal_met: bool
    notes: list[str] = field(default_factory=list)

    def history_rows(self) -> list[dict]:
        return [{"trial": h["trial"], "best_cost": h["best_cost"], "mean_cost": h["mean_cost"]}
                for h in self.ga.history]


def _pool_map(jobs: int):
    if jobs <= 1:
        return None
    pool = ProcessPoolExecutor(max_workers=jobs)

    def run(fn, xs):
        return list(pool.map(fn, xs))

    run.pool = pool  # type: ignore[attr-defined]
    return run


def design_matching_networks(substrate: SubstrateParams = SubstrateParams(),
                             cfg: DesignConfig = DesignConfig(), *, jobs: int = 1,
                             seeds: tuple[StubTopology, ...] = ()) -> tuple[StubTopology, StubTopology, DesignReport]:
    """Optimize MN1 and MN2; returns both geometries and a report.

    The GA starts from the presynthesized geometry, the published one and any
    extra ``seeds``. Falling short of the return-loss goal is reported in
    ``goal_met`` rather than raised.
    """
    errs = cfg.validate()
    if errs:
        raise ValueError("; ".join(errs))
    pre, pre_info = presynthesize(substrate, cfg)
    initial = [topology_to_vector(pre), topology_to_vector(PUBLISHED_NETWORKS)]
    initial += [topology_to_vector(s) for s in seeds]
    mapper = _pool_map(jobs)
    try:
        res = ga_optimize(_Objective(substrate, cfg), cfg.ga_config(), initial, mapper)
    finally:
        if mapper is not None:
            mapper.pool.shutdown()
    topo = vector_to_topology(res.best_params)
    ev = evaluate_design(topo, substrate, cfg)
    mid = [d for d in ev["drives"] if classify_mode(d["p_dbm"], cfg.thresholds) == Mode.POWER_SAVING]
    goal = all(d["s11_db"] <= cfg.s11_goal_db for d in mid)
    report = DesignReport(topo, res.best_cost, ev, res, pre_info, goal, [FIDELITY_NOTE])
    return topo.mn1, topo.mn2, report


def with_bounds(cfg: DesignConfig, bounds: dict[str, tuple[float, float]]) -> DesignConfig:
    merged = {**dict(zip(GENES, cfg.bounds)), **bounds}
    return replace(cfg, bounds=tuple(merged[g] for g in GENES))
