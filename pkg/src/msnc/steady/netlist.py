"""Circuit netlist and excitation descriptions for the time-domain solver."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any

from ..diode import DiodeParams

ELEMENT_TYPES = {
    # type: (node count, required numeric fields)
    "R": (2, ("value_ohm",)),
    "C": (2, ("value_f",)),
    "L": (2, ("value_h",)),
    "TL": (2, ("z0_ohm", "theta_rad", "f_ref_hz")),
    "STUB": (1, ("z0_ohm", "theta_rad", "f_ref_hz")),
    "D": (2, ()),
    "SRC": (2, ("z_source",)),
}


class NetlistError(ValueError):
    pass


@dataclass(frozen=True)
class Tone:
    freq: float
    p_avail: float  # dBm
    phase: float = 0.0  # degrees


@dataclass(frozen=True)
class ExcitationSpec:
    tones: tuple[Tone, ...]
    z_source: float = 50.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "tones", tuple(self.tones))
        if not self.tones:
            raise NetlistError("excitation needs at least one tone")
        fs = [t.freq for t in self.tones]
        if any(f <= 0 for f in fs):
            raise NetlistError("tone frequencies must be positive")
        if len(set(fs)) != len(fs):
            raise NetlistError("tone frequencies must be distinct")
        if any(not 0 <= t.phase < 360 for t in self.tones):
            raise NetlistError("tone phases must lie in [0, 360)")
        if not self.z_source > 0:
            raise NetlistError("source impedance must be positive")

    @classmethod
    def single(cls, freq: float, p_dbm: float, z_source: float = 50.0) -> "ExcitationSpec":
        return cls((Tone(freq, p_dbm),), z_source)

    @classmethod
    def multitone(cls, n_tones: int, p_total_w: float, f_center: float = 680e6,
                  spacing: float = 1e6, phase_step: float = 0.0,
                  z_source: float = 50.0) -> "ExcitationSpec":
        """Equal-power tones centred on ``f_center``; adjacent tones differ by ``phase_step`` degrees."""
        if n_tones < 1:
            raise NetlistError("need at least one tone")
        p_each = 10 * math.log10(p_total_w / n_tones / 1e-3) if p_total_w > 0 else -math.inf
        offs = [i - (n_tones - 1) / 2 for i in range(n_tones)]
        tones = tuple(Tone(f_center + o * spacing, p_each, (i * phase_step) % 360.0)
                      for i, o in enumerate(offs))
        return cls(tones, z_source)

    @property
    def p_avail_w(self) -> float:
        return sum(1e-3 * 10 ** (t.p_avail / 10) for t in self.tones)

    @property
    def lowest(self) -> Tone:
        return min(self.tones, key=lambda t: t.freq)

    def common_period(self, rel_tol: float = 1e-9, max_den: int = 10**6,
                      max_periods: int = 100_000) -> float:
        """Least common period of all tones.

        Raises if the tones are not commensurable or their common period
        spans more than ``max_periods`` periods of the highest tone.
        """
        fr = []
        for t in self.tones:
            q = Fraction(t.freq).limit_denominator(max_den)
            if abs(float(q) - t.freq) > rel_tol * t.freq:
                raise NetlistError(f"tone {t.freq} Hz is not commensurable on the simulation grid")
            fr.append(q)
        # gcd of rationals: gcd(numerators) / lcm(denominators)
        lcm_den = 1
        for q in fr:
            lcm_den = lcm_den * q.denominator // math.gcd(lcm_den, q.denominator)
        g = 0
        for q in fr:
            g = math.gcd(g, q.numerator * (lcm_den // q.denominator))
        period = lcm_den / g
        if period * max(t.freq for t in self.tones) > max_periods * (1 + rel_tol):
            raise NetlistError(f"tones share no common period within {max_periods} carrier periods")
        return period


@dataclass(frozen=True)
class Element:
    type: str
    name: str
    nodes: tuple[str, ...]
    params: dict = field(default_factory=dict)

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)


@dataclass(frozen=True)
class Port:
    name: str
    node: str
    current_from: tuple[str, ...]
    z_ref: float = 50.0


@dataclass(frozen=True)
class CircuitNetlist:
    nodes: tuple[str, ...]
    elements: tuple[Element, ...]
    ports: tuple[Port, ...] = ()
    ground: str = "0"
    load: str | None = None

    def element(self, name: str) -> Element:
        for e in self.elements:
            if e.name == name:
                return e
        raise KeyError(name)

    def sources(self) -> list[Element]:
        return [e for e in self.elements if e.type == "SRC"]

    def driven_sources(self) -> list[Element]:
        return [e for e in self.sources() if e.get("driven", True)]

    def with_driven(self, *names: str) -> "CircuitNetlist":
        """Copy in which exactly the named sources are driven."""
        els = []
        for e in self.elements:
            if e.type == "SRC":
                e = replace(e, params={**e.params, "driven": e.name in names})
            els.append(e)
        return replace(self, elements=tuple(els))

    def replace_elements(self, mapping: dict[str, Element]) -> "CircuitNetlist":
        return replace(self, elements=tuple(mapping.get(e.name, e) for e in self.elements))

    def validate(self) -> list[str]:
        errs: list[str] = []
        known = set(self.nodes) | {self.ground}
        if self.ground in self.nodes:
            errs.append(f"ground {self.ground!r} must not be listed among nodes")
        if len(set(self.nodes)) != len(self.nodes):
            errs.append("duplicate node names")
        names = [e.name for e in self.elements]
        if len(set(names)) != len(names):
            errs.append("duplicate element names")
        adj: dict[str, set[str]] = {n: set() for n in known}
        for i, e in enumerate(self.elements):
            where = f"elements[{i}] ({e.name})"
            if e.type not in ELEMENT_TYPES:
                errs.append(f"{where}: unknown type {e.type!r}")
                continue
            n_nodes, req = ELEMENT_TYPES[e.type]
            if len(e.nodes) != n_nodes:
                errs.append(f"{where}: expected {n_nodes} nodes, got {len(e.nodes)}")
            for n in e.nodes:
                if n not in known:
                    errs.append(f"{where}: unknown node {n!r}")
            for r in req:
                v = e.params.get(r)
                if not isinstance(v, (int, float)) or not math.isfinite(v):
                    errs.append(f"{where}: missing or non-numeric {r}")
                elif r != "theta_rad" and v <= 0:
                    errs.append(f"{where}: {r} must be positive")
            att = e.params.get("atten_np", 0.0)
            if not isinstance(att, (int, float)) or not 0 <= att < 10:
                errs.append(f"{where}: atten_np must lie in [0, 10)")
            if e.type == "STUB" and e.params.get("end", "open") not in ("open", "short"):
                errs.append(f"{where}: stub end must be 'open' or 'short'")
            if e.type == "D":
                try:
                    diode_params(e)
                except (TypeError, ValueError) as exc:
                    errs.append(f"{where}: {exc}")
            ns = [n for n in e.nodes if n in known]
            if e.type in ("TL",):
                ns = ns + [self.ground]
            for a in ns:
                for b in ns:
                    if a != b:
                        adj[a].add(b)
            if e.type == "STUB" and ns:
                adj[ns[0]].add(self.ground)
                adj[self.ground].add(ns[0])
        # connectivity
        seen = {self.ground}
        stack = [self.ground]
        while stack:
            for nb in adj.get(stack.pop(), ()):
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        floating = sorted(set(self.nodes) - seen)
        if floating:
            errs.append(f"nodes not connected to ground: {floating}")
        for p in self.ports:
            if p.node not in known:
                errs.append(f"port {p.name}: unknown node {p.node!r}")
            for nm in p.current_from:
                if nm not in names:
                    errs.append(f"port {p.name}: unknown element {nm!r}")
        if self.load is not None and self.load not in names:
            errs.append(f"load element {self.load!r} not found")
        return errs

    # JSON round trip
    def to_dict(self) -> dict:
        els = []
        for e in self.elements:
            d = {"type": e.type, "name": e.name, "nodes": list(e.nodes)}
            for k, v in e.params.items():
                if isinstance(v, DiodeParams):
                    v = {f.name: getattr(v, f.name) for f in fields(v)}
                d[k] = v
            els.append(d)
        out = {
            "nodes": list(self.nodes),
            "ground": self.ground,
            "elements": els,
            "ports": [{"name": p.name, "node": p.node, "current_from": list(p.current_from),
                       "z_ref": p.z_ref} for p in self.ports],
        }
        if self.load is not None:
            out["load"] = self.load
        return out

    @classmethod
    def from_dict(cls, doc: dict) -> "CircuitNetlist":
        els = []
        for i, d in enumerate(doc.get("elements", [])):
            d = dict(d)
            typ = d.pop("type", None)
            name = d.pop("name", f"{typ}{i}")
            nodes = tuple(d.pop("nodes", ()))
            els.append(Element(typ, name, nodes, d))
        ports = tuple(Port(p["name"], p["node"], tuple(p.get("current_from", ())), p.get("z_ref", 50.0))
                      for p in doc.get("ports", []))
        return cls(tuple(doc.get("nodes", ())), tuple(els), ports, doc.get("ground", "0"), doc.get("load"))

    def to_json(self, path: str | Path | None = None) -> str:
        s = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            Path(path).write_text(s)
        return s

    @classmethod
    def from_json(cls, src: str | Path) -> "CircuitNetlist":
        p = Path(src)
        text = p.read_text() if p.exists() else str(src)
        return cls.from_dict(json.loads(text))


def diode_params(e: Element) -> DiodeParams:
    p = e.params.get("params", {})
    if isinstance(p, DiodeParams):
        base = p
    else:
        base = DiodeParams(**(p or {}))
    count = e.params.get("count", 1)
    if count < 1:
        raise ValueError("diode count must be >= 1")
    return base.scaled(count) if count != 1 else base


def r(name: str, a: str, b: str, ohm: float) -> Element:
    return Element("R", name, (a, b), {"value_ohm": float(ohm)})


def c(name: str, a: str, b: str, farad: float) -> Element:
    return Element("C", name, (a, b), {"value_f": float(farad)})


def tl(name: str, a: str, b: str, z0: float, theta: float, f_ref: float,
       atten_np: float = 0.0) -> Element:
    """Two-conductor line; ``atten_np`` is its one-way distortionless attenuation."""
    p = {"z0_ohm": float(z0), "theta_rad": float(theta), "f_ref_hz": float(f_ref)}
    if atten_np:
        p["atten_np"] = float(atten_np)
    return Element("TL", name, (a, b), p)


def stub(name: str, a: str, z0: float, theta: float, f_ref: float, end: str = "open",
         atten_np: float = 0.0) -> Element:
    p = {"z0_ohm": float(z0), "theta_rad": float(theta), "f_ref_hz": float(f_ref), "end": end}
    if atten_np:
        p["atten_np"] = float(atten_np)
    return Element("STUB", name, (a,), p)


def diode(name: str, anode: str, cathode: str, params: DiodeParams | None = None, count: int = 1) -> Element:
    return Element("D", name, (anode, cathode), {"params": params or DiodeParams(), "count": count})


def src(name: str, a: str, z_source: float = 50.0, driven: bool = True, ground: str = "0") -> Element:
    return Element("SRC", name, (a, ground), {"z_source": float(z_source), "driven": driven})
