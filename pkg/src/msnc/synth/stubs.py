"""Double radial-stub matching networks and the diode loading chain."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from scipy import constants

from ..netalg import TwoPortAbcd, cascade, input_impedance, series_abcd, shunt_abcd
from .microstrip import ParameterError, SubstrateParams, microstrip_analyze, microstrip_line_abcd

N_SECTIONS = 32


@dataclass(frozen=True)
class MnGeometry:
    """Feed line (w x l) with radial stubs at its input (r1, alpha1) and output (r2, alpha2).

    Lengths in metres, angles in degrees. A zero radius or zero angle
    leaves that stub out.
    """

    w: float
    l: float
    r1: float = 0.0
    r2: float = 0.0
    alpha1: float = 0.0
    alpha2: float = 0.0

    def __post_init__(self) -> None:
        bad = [k for k, v in asdict(self).items() if not (v >= 0 and math.isfinite(v))]
        if bad:
            raise ParameterError(f"geometry values must be finite and >= 0: {bad}")
        if self.w <= 0:
            raise ParameterError("feed width must be positive")
        if self.alpha1 >= 180 or self.alpha2 >= 180:
            raise ParameterError("stub angles must be below 180 degrees")

    def to_mm(self) -> dict:
        return {"w_mm": self.w * 1e3, "l_mm": self.l * 1e3, "r1_mm": self.r1 * 1e3,
                "r2_mm": self.r2 * 1e3, "alpha1_deg": self.alpha1, "alpha2_deg": self.alpha2}

    @classmethod
    def from_mm(cls, d: dict) -> "MnGeometry":
        return cls(d["w_mm"] * 1e-3, d["l_mm"] * 1e-3, d.get("r1_mm", 0) * 1e-3,
                   d.get("r2_mm", 0) * 1e-3, d.get("alpha1_deg", 0), d.get("alpha2_deg", 0))


@dataclass(frozen=True)
class StubTopology:
    mn1: MnGeometry
    mn2: MnGeometry

    def to_dict(self) -> dict:
        return {"MN1": self.mn1.to_mm(), "MN2": self.mn2.to_mm()}

    @classmethod
    def from_dict(cls, d: dict) -> "StubTopology":
        return cls(MnGeometry.from_mm(d["MN1"]), MnGeometry.from_mm(d["MN2"]))


PUBLISHED_NETWORKS = StubTopology(
    MnGeometry(4.9e-3, 2.5e-3, 18.5e-3, 19.5e-3, 89.0, 90.0),
    MnGeometry(0.5e-3, 4.5e-3, 9.7e-3, 0.0, 60.0, 0.0),
)


def radial_stub_admittance(w_feed: float, radius: float, alpha_deg: float,
                           substrate: SubstrateParams, freq: float,
                           n_sections: int = N_SECTIONS) -> complex:
    """Input admittance of an open radial stub fed by a strip of width ``w_feed``.

    The sector is cut into ``n_sections`` rings; ring ``i`` is a uniform
    strip whose width is the feed width plus the arc length at its mid
    radius. Admittance is carried from the open rim back to the apex.
    """
    if radius == 0 or alpha_deg == 0:
        return 0j
    if n_sections < 1:
        raise ParameterError("need at least one section")
    alpha = math.radians(alpha_deg)
    dl = radius / n_sections
    y = 0j
    for i in reversed(range(n_sections)):
        rho = (i + 0.5) * dl
        z0, ee = microstrip_analyze(w_feed + rho * alpha, substrate)
        t = math.tan(2 * math.pi * freq * math.sqrt(ee) * dl / constants.c)
        yc = 1.0 / z0
        y = yc * (y + 1j * yc * t) / (yc + 1j * y * t)
    return complex(y)


def stub_network_abcd(net: MnGeometry, substrate: SubstrateParams = SubstrateParams(),
                      freq: float = 680e6, n_sections: int = N_SECTIONS) -> TwoPortAbcd:
    """shunt(stub 1) . feed line . shunt(stub 2)."""
    y1 = radial_stub_admittance(net.w, net.r1, net.alpha1, substrate, freq, n_sections)
    y2 = radial_stub_admittance(net.w, net.r2, net.alpha2, substrate, freq, n_sections)
    line = microstrip_line_abcd(net.w, net.l, substrate, freq)
    return cascade([shunt_abcd(y1, freq), line, shunt_abcd(y2, freq)])


def loading_chain_abcd(mn1: TwoPortAbcd, y_d: complex, mn2: TwoPortAbcd, z_d: complex) -> TwoPortAbcd:
    """MN1, the four-diode shunt bank, MN2 and the series rectifying diode."""
    f = mn1.freq
    return cascade([mn1, shunt_abcd(4 * y_d, f), mn2, series_abcd(z_d, f)])


def z_a_from_chain(chain: TwoPortAbcd, mode: str, r_l: float, c: float, freq: float) -> complex:
    """Chain input impedance with the even (2 R_L || C) or odd (short) termination."""
    if mode == "odd":
        z_l = 0j
    elif mode == "even":
        if not r_l > 0:
            raise ParameterError("load resistance must be positive")
        z_l = 1.0 / (1.0 / (2 * r_l) + 2j * math.pi * freq * c)
    else:
        raise ParameterError(f"mode must be 'even' or 'odd', not {mode!r}")
    return input_impedance(chain, z_l)
