"""Periodic steady state by time integration with DC-envelope acceleration.

Integration runs whole common periods of the excitation. Capacitors at or
above ``SolverConfig.slow_cap`` hold the slow (DC) state: after the fast
waveform has settled, the per-period drift ``F(V)`` of those capacitor
voltages is measured and a secant/Broyden update jumps them towards
``F(V) = 0``. With ``accelerate=False`` the same loop runs without jumps
(brute force), which is what the calibration test compares against.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel
from .netlist import CircuitNetlist, ExcitationSpec, NetlistError, diode_params

log = logging.getLogger(__name__)

GMIN = 1e-12


class ConvergenceError(RuntimeError):
    def __init__(self, msg: str, diagnostics: dict | None = None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class SolverConfig:
    samples_per_period: int = 256
    max_cycles: int = 2000
    drift_tol: float = 1e-4
    accelerate: bool = True
    slow_cap: float = 1e-9
    settle_tol: float = 1e-6
    drift_agree: float = 0.02
    ac_gate: float = 1e-2
    max_newton: int = 60
    vtol: float = 1e-10
    substep_levels: int = 3
    v_floor: float = 1e-9
    record_nodes: bool = True

    def __post_init__(self) -> None:
        if self.samples_per_period < 16:
            raise ValueError("samples_per_period must be at least 16")
        if self.max_cycles < 2:
            raise ValueError("max_cycles must be at least 2")
        if not 0 < self.drift_tol < 1:
            raise ValueError("drift_tol must lie in (0, 1)")


@dataclass(frozen=True)
class SteadyStateResult:
    period: float
    dt: float
    node_names: tuple[str, ...]
    node_waveforms: np.ndarray
    p_dc: float
    v_dc: float
    p_in_avg: float
    p_avail: float
    fundamental_phasors: dict
    converged: bool
    cycles_used: int
    energy: dict = field(default_factory=dict)
    port_waveforms: dict = field(default_factory=dict, repr=False)
    diagnostics: dict = field(default_factory=dict)
    freq0: float = 0.0

    def waveform(self, node: str) -> np.ndarray:
        return self.node_waveforms[self.node_names.index(node)]

    def s_waves(self, port: str, z_ref: float = 50.0) -> tuple[complex, complex]:
        """Incident and reflected power waves (peak, sqrt(W)) at the fundamental."""
        v, i = self.fundamental_phasors[port]
        k = 1.0 / (2.0 * math.sqrt(z_ref))
        return k * (v + z_ref * i), k * (v - z_ref * i)


class _Compiled:
    """Array form of a netlist at one time step, plus mutable solver state."""

    def __init__(self, net: CircuitNetlist, exc: ExcitationSpec, cfg: SolverConfig):
        errs = net.validate()
        if errs:
            raise NetlistError("; ".join(errs))
        self.net, self.exc, self.cfg = net, exc, cfg
        self.T = exc.common_period()
        fmean = sum(t.freq for t in exc.tones) / len(exc.tones)
        self.N = int(round(self.T * fmean * cfg.samples_per_period))
        if self.N > 20_000_000:
            raise NetlistError("common period too long for the simulation grid")
        self.dt = self.T / self.N
        self.hs = np.array([self.dt / 2**lev for lev in range(cfg.substep_levels + 1)])

        names = list(net.nodes)
        idx = {nm: i for i, nm in enumerate(names)}
        # internal junction nodes for diode series resistance
        for e in net.elements:
            if e.type == "D" and diode_params(e).r_s > 0:
                idx[e.name + "#j"] = len(names)
                names.append(e.name + "#j")
        n = len(names)
        idx[net.ground] = n
        self.node_names = tuple(names)
        self.n = n

        bp, bq, bt, ba, g0 = [], [], [], [], []
        caps, inds, slow = [], [], []
        srcs, tls, stubs, juncs = [], [], [], []
        self.elem_branches: dict[str, list[int]] = {}
        self.elem_junc: dict[str, int] = {}

        def add(p, q, typ, aux, g):
            bp.append(idx[p]); bq.append(idx[q]); bt.append(typ); ba.append(aux); g0.append(g)
            return len(bp) - 1

        for e in net.elements:
            br = []
            if e.type == "R":
                br.append(add(*e.nodes, 0, 0, 1.0 / e.get("value_ohm")))
            elif e.type == "C":
                cval = e.get("value_f")
                br.append(add(*e.nodes, 1, len(caps), 2 * cval / self.dt))
                caps.append(cval)
                if cval >= cfg.slow_cap:
                    slow.append((len(caps) - 1, tuple(e.nodes)))
            elif e.type == "L":
                lval = e.get("value_h")
                br.append(add(*e.nodes, 2, len(inds), self.dt / (2 * lval)))
                inds.append(lval)
            elif e.type == "SRC":
                zs = e.get("z_source")
                br.append(add(*e.nodes, 3, len(srcs), 1.0 / zs))
                srcs.append(e)
            elif e.type in ("TL", "STUB"):
                z0 = e.get("z0_ohm")
                tau = e.get("theta_rad") / (2 * math.pi * e.get("f_ref_hz"))
                d = max(1, int(round(tau / self.dt)))
                kappa = math.exp(-e.get("atten_np", 0.0))
                if e.type == "TL":
                    k = len(tls)
                    br.append(add(e.nodes[0], net.ground, 4, 2 * k, 1.0 / z0))
                    br.append(add(e.nodes[1], net.ground, 4, 2 * k + 1, 1.0 / z0))
                    tls.append((d, z0, kappa))
                else:
                    br.append(add(e.nodes[0], net.ground, 5, len(stubs), 1.0 / z0))
                    sign = 1.0 if e.get("end", "open") == "open" else -1.0
                    stubs.append((d, z0, sign * kappa**2))
            elif e.type == "D":
                dp = diode_params(e)
                a, c = e.nodes
                if dp.r_s > 0:
                    br.append(add(a, e.name + "#j", 0, 0, 1.0 / dp.r_s))
                    a = e.name + "#j"
                self.elem_junc[e.name] = len(juncs)
                juncs.append((idx[a], idx[c], dp))
            self.elem_branches[e.name] = br

        self.bp = np.array(bp, dtype=np.int64)
        self.bq = np.array(bq, dtype=np.int64)
        self.btype = np.array(bt, dtype=np.int64)
        self.baux = np.array(ba, dtype=np.int64)
        nb = len(bp)
        L = len(self.hs)
        self.bg = np.empty((L, nb))
        for lev, h in enumerate(self.hs):
            for b in range(nb):
                if bt[b] == 1:
                    self.bg[lev, b] = 2 * caps[ba[b]] / h
                elif bt[b] == 2:
                    self.bg[lev, b] = h / (2 * inds[ba[b]])
                else:
                    self.bg[lev, b] = g0[b]
        self.caps = np.array(caps)
        self.n_ind = len(inds)

        # sources: every driven source carries all tones
        nt = len(exc.tones)
        self.amp = np.zeros((max(len(srcs), 1), nt))
        self.omega = np.zeros_like(self.amp)
        self.phase = np.zeros_like(self.amp)
        for s, e in enumerate(srcs):
            for k, tone in enumerate(exc.tones):
                self.omega[s, k] = 2 * math.pi * tone.freq
                self.phase[s, k] = math.radians(tone.phase)
                if e.get("driven", True) and math.isfinite(tone.p_avail):
                    p = 1e-3 * 10 ** (tone.p_avail / 10)
                    self.amp[s, k] = math.sqrt(8 * e.get("z_source") * p)
        self.srcs = srcs

        self.tl_d = np.array([t[0] for t in tls] or [1], dtype=np.int64)
        self.tl_g = np.array([1 / t[1] for t in tls] or [0.0])
        self.tl_k = np.array([t[2] for t in tls] or [1.0])
        self.n_tl = len(tls)
        self.st_d = np.array([d for d, _, _ in stubs] or [1], dtype=np.int64)
        self.st_g = np.array([1 / z for _, z, _ in stubs] or [0.0])
        self.st_sign = np.array([s for _, _, s in stubs] or [1.0])
        self.n_st = len(stubs)

        m = len(juncs)
        self.m = m
        self.j_a = np.array([j[0] for j in juncs], dtype=np.int64)
        self.j_c = np.array([j[1] for j in juncs], dtype=np.int64)
        self.j_is = np.array([j[2].i_s for j in juncs])
        self.j_alpha = np.array([j[2].alpha for j in juncs])
        self.j_ibv = np.array([j[2].i_bv for j in juncs])
        self.j_bv = np.array([j[2].b_v for j in juncs])
        self.j_cj0 = np.array([j[2].c_j0 for j in juncs])
        self.j_vj = np.array([j[2].v_j for j in juncs])
        vt = 1 / self.j_alpha if m else np.zeros(0)
        self.j_vcrit = vt * np.log(vt / (math.sqrt(2) * self.j_is)) if m else np.zeros(0)
        self.j_vcrit_b = (vt * np.log(vt / (math.sqrt(2) * np.maximum(self.j_ibv, 1e-30)))
                          if m else np.zeros(0))

        # factor the companion conductance matrix per step level
        self.Minv = np.empty((L, n, n))
        self.MinvP = np.empty((L, n, max(m, 1)))
        self.Zred = np.empty((L, max(m, 1), max(m, 1)))
        P = np.zeros((n + 1, max(m, 1)))
        for k in range(m):
            P[self.j_a[k], k] += 1
            P[self.j_c[k], k] -= 1
        P = P[:n]
        for lev in range(L):
            M = np.zeros((n + 1, n + 1))
            for b in range(nb):
                g, p, q = self.bg[lev, b], bp[b], bq[b]
                M[p, p] += g; M[q, q] += g; M[p, q] -= g; M[q, p] -= g
            M = M[:n, :n] + GMIN * np.eye(n)
            self.Minv[lev] = np.linalg.inv(M)
            self.MinvP[lev] = self.Minv[lev] @ P
            self.Zred[lev] = P.T @ self.MinvP[lev]

        # slow capacitor groups keyed by node pair
        groups: dict[tuple, list[int]] = {}
        for ci, nodes in slow:
            key = tuple(sorted(nodes))
            sign = 1.0 if tuple(nodes) == key else -1.0
            groups.setdefault(key, []).append((ci, sign))
        self.slow_groups = list(groups.values())
        self.slow_keys = list(groups.keys())

        # port recording
        rec, self.port_terms = [], {}
        for port in net.ports:
            terms = []
            for nm in port.current_from:
                for b in self.elem_branches[nm]:
                    if bp[b] == idx[port.node]:
                        terms.append((len(rec), -1.0))
                        rec.append(b)
                    elif bq[b] == idx[port.node]:
                        terms.append((len(rec), 1.0))
                        rec.append(b)
            if not terms:
                raise NetlistError(f"port {port.name}: no listed element touches node {port.node}")
            self.port_terms[port.name] = (idx[port.node], terms)
        self.rec_b = np.array(rec, dtype=np.int64)
        self.node_idx = idx
        self.reset()

    def reset(self) -> None:
        self.cap_v = np.zeros(max(len(self.caps), 1))
        self.cap_i = np.zeros_like(self.cap_v)
        self.ind_v = np.zeros(max(self.n_ind, 1))
        self.ind_i = np.zeros_like(self.ind_v)
        self.tl_buf = np.zeros((max(self.n_tl, 1), 2, int(self.tl_d.max()) + 2))
        self.tl_head = np.zeros(max(self.n_tl, 1), dtype=np.int64)
        self.st_buf = np.zeros((max(self.n_st, 1), 2 * int(self.st_d.max()) + 2))
        self.st_head = np.zeros(max(self.n_st, 1), dtype=np.int64)
        self.j_v = np.zeros(self.m)
        self.j_q = np.zeros(self.m)
        self.j_ic = np.zeros(self.m)
        self.v = np.zeros(self.n + 1)
        self.k = 0
        nrec = self.N
        self.rec_v = np.zeros((self.n, nrec))
        self.rec_i = np.zeros((len(self.rec_b), nrec))
        self.rec_j = np.zeros((max(self.m, 1), nrec))
        self.acc_b = np.zeros(len(self.bp))
        self.acc_j = np.zeros(max(self.m, 1))

    def run_period(self, record: bool = True) -> None:
        if record:
            self.acc_b[:] = 0
            self.acc_j[:] = 0
        fail = _kernel.run(
            self.N, self.k, self.N, self.dt, self.hs, self.n, self.m,
            self.Minv, self.MinvP, self.Zred, self.bg, self.bp, self.bq, self.btype, self.baux,
            self.cap_v, self.cap_i, self.ind_v, self.ind_i,
            self.amp, self.omega, self.phase,
            self.tl_buf, self.tl_head, self.tl_d, self.tl_g, self.tl_k,
            self.st_buf, self.st_head, self.st_d, self.st_sign, self.st_g,
            self.j_a, self.j_c, self.j_is, self.j_alpha, self.j_ibv, self.j_bv,
            self.j_cj0, self.j_vj, self.j_vcrit, self.j_vcrit_b,
            self.j_v, self.j_q, self.j_ic,
            self.v, self.cfg.max_newton, self.cfg.vtol,
            record, self.rec_v, self.rec_b, self.rec_i, self.acc_b, self.acc_j, self.rec_j,
        )
        if fail >= 0:
            raise ConvergenceError(
                f"Newton failed at sample {fail} (t = {fail * self.dt:.6e} s) after "
                f"{self.cfg.substep_levels} step halvings",
                {"sample": int(fail), "junction_v": self.j_v.tolist()},
            )
        self.k += self.N

    _STATE = ("cap_v", "cap_i", "ind_v", "ind_i", "tl_buf", "tl_head", "st_buf", "st_head",
              "j_v", "j_q", "j_ic", "v")

    def snapshot(self) -> dict:
        snap = {k: getattr(self, k).copy() for k in self._STATE}
        snap["k"] = self.k
        return snap

    def restore(self, snap: dict) -> None:
        for k in self._STATE:
            getattr(self, k)[...] = snap[k]
        self.k = snap["k"]

    def slow_state(self) -> np.ndarray:
        return np.array([sum(s * self.cap_v[ci] for ci, s in g) / len(g) for g in self.slow_groups])

    def shift_slow(self, dv: np.ndarray) -> None:
        for g, d in zip(self.slow_groups, dv):
            for ci, s in g:
                self.cap_v[ci] += s * d


def _ac_change(prev: np.ndarray, cur: np.ndarray) -> float:
    a = cur - cur.mean(axis=1, keepdims=True)
    b = prev - prev.mean(axis=1, keepdims=True)
    scale = max(float(np.abs(a).max()), 1e-12)
    return float(np.abs(a - b).max()) / scale


def _drift_settled(drifts: list[np.ndarray], rel: float, floor: np.ndarray | float = 0.0) -> bool:
    """Fast transients are gone when three successive slow drifts agree.

    ``floor`` is the drift error that no longer matters for the solution.
    """
    if len(drifts) < 3:
        return False
    a, b, c = drifts[-3:]
    tol = np.maximum(rel * np.abs(c), floor) + 1e-15
    return bool(np.all(np.abs(c - b) <= tol) and np.all(np.abs(b - a) <= tol))


def integrate_to_steady(netlist: CircuitNetlist, excitation: ExcitationSpec,
                        solver_cfg: SolverConfig | None = None) -> SteadyStateResult:
    """Integrate until the DC state and the fast waveform are both periodic."""
    cfg = solver_cfg or SolverConfig()
    sim = _Compiled(netlist, excitation, cfg)
    cycles = 0
    jumps = 0
    nslow = len(sim.slow_groups)
    prev_w = None
    prev_meas: tuple[np.ndarray, np.ndarray] | None = None
    jac = None
    converged = False
    proj = math.inf
    settle = math.inf
    drifts: list[np.ndarray] = []
    snap = None
    trust = 1.0
    backtracks = 0
    while cycles < cfg.max_cycles:
        v0 = sim.slow_state()
        sim.run_period(record=True)
        cycles += 1
        v1 = sim.slow_state()
        w = sim.rec_v.copy()
        if prev_w is not None:
            settle = _ac_change(prev_w, w)
        prev_w = w
        F = v1 - v0
        drifts.append(F)
        if nslow == 0:
            if settle <= cfg.settle_tol:
                converged, proj = True, 0.0
                break
            continue
        floor = 0.0
        if jac is not None:
            # an F error this small moves the Newton step by < drift_tol/4
            floor = 0.25 * cfg.drift_tol * np.maximum(np.abs(v1), cfg.v_floor) * np.abs(np.diag(jac))
        if settle > cfg.ac_gate or not _drift_settled(drifts, cfg.drift_agree, floor):
            if cycles % 50 == 0:
                log.debug("cycle %d: unsettled F=%s settle=%.2e", cycles, F, settle)
            continue
        if not np.any(F):
            converged, proj = True, 0.0
            break
        scale = np.maximum(np.abs(v1), cfg.v_floor)
        if not cfg.accelerate:
            # remaining drift of a geometric sequence: F r / (1 - r)
            if prev_meas is not None:
                r = F / np.where(prev_meas[1] == 0, 1.0, prev_meas[1])
                ok = (r > 0) & (r < 1)
                rest = np.where(ok, np.abs(F * r) / np.where(ok, 1 - r, 1.0), np.inf)
                proj = float(np.max(rest / scale))
                if proj < cfg.drift_tol:
                    converged = True
                    break
            prev_meas = (v0, F)
            continue
        if prev_meas is None:
            # finite-difference probe of every slow variable at once
            d = np.maximum(0.05 * np.abs(v1), 1e-3 * max(float(np.abs(v1).max()), 1e-6))
            d = np.where(F >= 0, d, -d)
            prev_meas = (v0, F)
            sim.shift_slow(d)
            jumps += 1
            prev_w = None
            drifts = []
            continue
        dV = v0 - prev_meas[0]
        dF = F - prev_meas[1]
        if jac is None:
            jac = np.diag(np.where(dV != 0, dF / np.where(dV != 0, dV, 1.0), -1e-6))
        elif float(dV @ dV) > 0:
            jac = jac + np.outer(dF - jac @ dV, dV) / float(dV @ dV)
        resid = float(np.max(np.abs(F)))
        if snap is not None and resid > snap[1]:
            # the jump made things worse: go back and take a shorter one
            sim.restore(snap[0])
            trust *= 0.25
            F, scale, v1 = snap[2], snap[3], snap[4]
            backtracks += 1
        else:
            prev_meas = (v0, F)
            trust = min(1.0, 2.0 * trust)
        try:
            step = -np.linalg.solve(jac, F)
        except np.linalg.LinAlgError:
            step = np.full(nslow, np.inf)
        if not np.all(np.isfinite(step)) or trust < 1e-3:
            jac = None
            prev_meas = None
            snap = None
            trust = 1.0
            continue
        proj = float(np.max(np.abs(step) / scale))
        log.debug("cycle %d: V=%s F=%s step=%s proj=%.3e", cycles, v1, F, step, proj)
        if proj < cfg.drift_tol:
            converged = True
            break
        snap = (sim.snapshot(), float(np.max(np.abs(F))), F, scale, v1)
        lim = trust * np.maximum(2.0 * np.abs(v1), 0.1)
        sim.shift_slow(np.clip(step, -lim, lim))
        jumps += 1
        prev_w = None
        drifts = []
    diag = {"jumps": jumps, "backtracks": backtracks, "projected_drift": proj, "settle_change": settle,
            "samples_per_period": sim.N, "dt": sim.dt}
    if not converged:
        log.warning("steady state not reached after %d cycles (projected drift %.3e)", cycles, proj)
    return _finish(sim, excitation, converged, cycles, diag)


def _finish(sim: _Compiled, exc: ExcitationSpec, converged: bool, cycles: int,
            diag: dict) -> SteadyStateResult:
    net = sim.net
    N = sim.N
    t = (np.arange(N) + 1) * sim.dt
    f0 = exc.lowest.freq
    basis = np.exp(-2j * math.pi * f0 * t) * (2.0 / N)
    phasors, port_w = {}, {}
    for name, (node, terms) in sim.port_terms.items():
        vw = sim.rec_v[node] if node < sim.n else np.zeros(N)
        iw = np.zeros(N)
        for r, s in terms:
            iw += s * sim.rec_i[r]
        phasors[name] = (complex(vw @ basis), complex(iw @ basis))
        port_w[name] = (vw.copy(), iw)
    acc = sim.acc_b / N
    bt = sim.btype
    p_src = 0.0
    p_diss = 0.0
    p_store = 0.0
    driven = set()
    for s, e in enumerate(sim.srcs):
        if e.get("driven", True):
            driven.add(s)
    for b in range(len(acc)):
        if bt[b] == 3:
            if sim.baux[b] in driven:
                p_src -= acc[b]
            else:
                p_diss += acc[b]
        elif bt[b] in (0, 4, 5):
            # resistors and (possibly lossy) lines
            p_diss += acc[b]
        else:
            p_store += acc[b]
    p_junc = float(sim.acc_j[: sim.m].sum() / N) if sim.m else 0.0
    p_diss += p_junc
    v_dc = 0.0
    p_dc = 0.0
    if net.load is not None:
        le = net.element(net.load)
        a, b = (sim.node_idx[x] for x in le.nodes)
        va = sim.rec_v[a] if a < sim.n else 0.0
        vb = sim.rec_v[b] if b < sim.n else 0.0
        v_dc = float(np.mean(va - vb))
        p_dc = v_dc**2 / le.get("value_ohm")
    bal = float(abs(p_src - p_diss) / p_src) if p_src > 0 else 0.0
    by_elem = {}
    for name, brs in sim.elem_branches.items():
        pw = float(sum(acc[b] for b in brs))
        if name in sim.elem_junc:
            pw += float(sim.acc_j[sim.elem_junc[name]] / N)
        by_elem[name] = pw
    energy = {"p_source": float(p_src), "p_dissipated": float(p_diss), "p_junction": p_junc,
              "p_storage": float(p_store), "balance_error": bal, "by_element": by_elem}
    return SteadyStateResult(
        period=sim.T, dt=sim.dt, node_names=sim.node_names,
        node_waveforms=sim.rec_v.copy() if sim.cfg.record_nodes else np.zeros((0, 0)),
        p_dc=p_dc, v_dc=v_dc, p_in_avg=float(p_src), p_avail=exc.p_avail_w,
        fundamental_phasors=phasors, converged=converged, cycles_used=cycles,
        energy=energy, port_waveforms=port_w, diagnostics=diag, freq0=f0,
    )
