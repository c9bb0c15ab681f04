"""Netlist builders: diode benches, a half-wave rectifier and the full node circuit."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

from .diode import SMS7621, DiodeParams
from .netalg import TwoPortAbcd, shunt_abcd
from .steady.netlist import CircuitNetlist, Element, Port, c, diode, r, src, stub, tl


def diode_bench(config: str = "series", params: DiodeParams = SMS7621,
                z_source: float = 50.0) -> CircuitNetlist:
    """Source driving a diode (or an opposed pair) straight to ground; port ``DUT``."""
    els: list[Element] = [src("SRC", "in", z_source)]
    if config == "series":
        els.append(diode("D1", "in", "0", params))
    elif config == "antiparallel-pair":
        els += [diode("D1", "in", "0", params), diode("D2", "0", "in", params)]
    else:
        raise ValueError(f"unknown diode topology {config!r}")
    return CircuitNetlist(("in",), tuple(els), (Port("DUT", "in", ("SRC",)),))


def rc_lowpass(r_ohm: float = 50.0, c_f: float = 100e-9) -> CircuitNetlist:
    """Source (internal resistance ``r_ohm``) into a shunt capacitor."""
    els = (src("SRC", "in", r_ohm), c("C1", "in", "0", c_f))
    return CircuitNetlist(("in",), els, (Port("P1", "in", ("SRC",)),))


def half_wave_rectifier(c_f: float = 100e-9, r_load: float = 11e3,
                        params: DiodeParams = SMS7621, z_source: float = 50.0) -> CircuitNetlist:
    """Series diode into a reservoir capacitor with a resistive load."""
    els = (
        src("SRC", "in", z_source),
        diode("D1", "in", "out", params),
        c("C1", "out", "0", c_f),
        r("RL", "out", "0", r_load),
    )
    return CircuitNetlist(("in", "out"), els, (Port("P1", "in", ("SRC",)),), load="RL")


# Lossless two-ports in the time domain

THETA_QUANTUM = 2 * math.pi / 64


def _quantize(theta: float, lo: float, hi: float) -> float:
    """Round to the angular quantum, staying strictly inside (lo, hi)."""
    q = round(theta / THETA_QUANTUM) * THETA_QUANTUM
    q = min(max(q, lo + THETA_QUANTUM), hi - THETA_QUANTUM)
    return q


STUB_THETA = math.pi / 8


def shunt_stub_elements(name: str, node: str, b: float, freq: float,
                        loss: float = 0.0) -> list[Element]:
    """Stub presenting susceptance ``b`` (S) at ``freq``; empty when b is negligible.

    Every stub is ``STUB_THETA`` long (open when capacitive, shorted when
    inductive) and its impedance absorbs the value. Short stubs store little
    more reactive energy than the susceptance needs, which keeps their loss
    low; a near-resonant stub with the same input admittance would not.
    """
    if abs(b) < 1e-9:
        return []
    t = math.tan(STUB_THETA)
    if b > 0:
        return [stub(name, node, t / b, STUB_THETA, freq, "open", loss * STUB_THETA)]
    return [stub(name, node, -1.0 / (b * t), STUB_THETA, freq, "short", loss * STUB_THETA)]


def stub_admittance(e: Element, freq: float, lossy: bool = False) -> complex:
    """Input admittance of a STUB element at ``freq``."""
    th = cmath.tanh(_gamma_l(e, freq, lossy))
    if e.get("end", "open") == "open":
        return th / e.get("z0_ohm")
    return 1.0 / (th * e.get("z0_ohm"))


def pi_elements(name: str, n1: str, n2: str, net: TwoPortAbcd,
                z_pref: float = 50.0, loss: float = 0.0) -> list[Element]:
    """Shunt stub, series line, shunt stub with the ABCD of ``net`` at its frequency.

    ``net`` must be lossless and reciprocal: A and D real, B and C imaginary.
    Line lengths are rounded to ``THETA_QUANTUM`` and the impedances are then
    solved exactly, so the realized matrix equals ``net`` at ``net.freq``
    (up to the small line ``loss``, in nepers per radian).
    """
    a, b, c, d = net.a, net.b, net.c, net.d
    scale = max(abs(a), abs(d), abs(b) / z_pref, abs(c) * z_pref)
    if max(abs(a.imag), abs(d.imag), abs(b.real) / z_pref, abs(c.real) * z_pref) > 1e-6 * scale:
        raise ValueError(f"{name}: matrix is not lossless and reciprocal")
    A, Bp, D = a.real, b.imag, d.real
    f = net.freq
    if abs(Bp) < 1e-9 * z_pref:
        raise ValueError(f"{name}: no series element; cannot realize without a transformer")
    s_target = max(min(Bp / z_pref, 1.0), -1.0)
    theta = math.asin(abs(s_target)) if abs(s_target) < 1 else math.pi / 2
    theta = _quantize(theta, 0.0, math.pi)
    if Bp < 0:
        theta = 2 * math.pi - theta
    z_line = Bp / math.sin(theta)
    cth = math.cos(theta)
    b2 = (cth - A) / Bp
    b1 = (cth - D) / Bp
    els = [tl(name + ".L", n1, n2, z_line, theta, f, loss * theta)]
    els += shunt_stub_elements(name + ".S1", n1, b1, f, loss)
    els += shunt_stub_elements(name + ".S2", n2, b2, f, loss)
    return els


def pi_abcd(elements: list[Element], freq: float, lossy: bool = False) -> TwoPortAbcd:
    """Frequency-domain ABCD of a network built by :func:`pi_elements`.

    With ``lossy`` the lines carry their distortionless attenuation, which
    is what the time-domain solver integrates.
    """
    line = next(e for e in elements if e.type == "TL")
    m = _line_abcd(line, freq, lossy)
    for e in elements:
        if e.type != "STUB":
            continue
        sh = shunt_abcd(stub_admittance(e, freq, lossy), freq)
        m = sh @ m if e.nodes[0] == line.nodes[0] else m @ sh
    return m


def _gamma_l(e: Element, freq: float, lossy: bool) -> complex:
    f_ratio = freq / e.get("f_ref_hz")
    att = e.get("atten_np", 0.0) if lossy else 0.0
    return complex(att, e.get("theta_rad") * f_ratio)


def _line_abcd(e: Element, freq: float, lossy: bool) -> TwoPortAbcd:
    gl = _gamma_l(e, freq, lossy)
    z = e.get("z0_ohm")
    ch, sh = cmath.cosh(gl), cmath.sinh(gl)
    return TwoPortAbcd(ch, z * sh, sh / z, ch, freq)


@dataclass(frozen=True)
class MsncDesign:
    """Circuit values of the node circuit; matching networks as ABCD at ``freq``."""

    mn1: TwoPortAbcd
    mn2: TwoPortAbcd
    freq: float = 680e6
    z0: float = 50.0
    r_load: float = 11e3
    c_rect: float = 100e-9
    diode: DiodeParams = SMS7621
    # distortionless line attenuation, nepers per radian (Q = 1/(2*loss))
    line_loss: float = 2e-3


def _branch_elements(tag: str, a: str, e_node: str, design: MsncDesign) -> tuple[list[str], list[Element]]:
    b, d = "b" + tag, "d" + tag
    els = pi_elements("MN1_" + tag, a, b, design.mn1, design.z0, design.line_loss)
    els += [
        diode("PD" + tag + "f", b, "0", design.diode, count=2),
        diode("PD" + tag + "r", "0", b, design.diode, count=2),
    ]
    els += pi_elements("MN2_" + tag, b, d, design.mn2, design.z0, design.line_loss)
    els.append(diode("SD" + tag, d, e_node, design.diode))
    return [b, d], els


def msnc_netlist(design: MsncDesign) -> CircuitNetlist:
    """Branch-line coupler with two identical nonlinear loading chains.

    Coupler ports: ``p1`` antenna (source ANT), ``a2``/``a3`` loading chains,
    ``p4`` transceiver (termination TR). Both chains end on the shared DC
    node ``e`` carrying C1, C2 and the load RL.
    """
    f, z0 = design.freq, design.z0
    q = math.pi / 2
    att = design.line_loss * q
    els: list[Element] = [
        src("ANT", "p1", z0, driven=True),
        src("TR", "p4", z0, driven=False),
        tl("BLC12", "p1", "a2", z0 / math.sqrt(2), q, f, att),
        tl("BLC34", "a3", "p4", z0 / math.sqrt(2), q, f, att),
        tl("BLC14", "p1", "p4", z0, q, f, att),
        tl("BLC23", "a2", "a3", z0, q, f, att),
    ]
    nodes = ["p1", "a2", "a3", "p4", "e"]
    for tag, a in (("2", "a2"), ("3", "a3")):
        ns, be = _branch_elements(tag, a, "e", design)
        nodes += ns
        els += be
    els += [c("C1", "e", "0", design.c_rect), c("C2", "e", "0", design.c_rect),
            r("RL", "e", "0", design.r_load)]
    ports = (Port("P1", "p1", ("ANT",), z0), Port("P2", "p4", ("TR",), z0))
    return CircuitNetlist(tuple(nodes), tuple(els), ports, load="RL")


def branch_netlist(design: MsncDesign) -> CircuitNetlist:
    """One loading chain driven from a matched source (even-mode half circuit).

    The DC node carries one rectifier capacitor and twice the load, so the
    chain sees exactly what it sees inside the symmetric full circuit.
    """
    ns, be = _branch_elements("2", "a2", "e", design)
    els = [src("SRC", "a2", design.z0)] + be + [
        c("C1", "e", "0", design.c_rect), r("RL", "e", "0", 2 * design.r_load)]
    return CircuitNetlist(tuple(["a2", "e"] + ns), tuple(els),
                          (Port("P1", "a2", ("SRC",), design.z0),), load="RL")
