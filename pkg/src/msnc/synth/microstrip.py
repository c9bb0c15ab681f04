"""Quasi-TEM microstrip: Hammerstad-Jensen analysis and its inverse."""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy import constants
from scipy.optimize import brentq

from ..netalg import TwoPortAbcd, tline_abcd

ETA0 = math.sqrt(constants.mu_0 / constants.epsilon_0)
U_MIN, U_MAX = 0.01, 100.0
Z_MIN, Z_MAX = 10.0, 150.0


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class SubstrateParams:
    eps_r: float = 3.55
    h: float = 1.52e-3
    tan_d: float = 0.0027  # kept for reference; the line model is lossless
    t_metal: float = 35e-6

    def __post_init__(self) -> None:
        if not self.eps_r > 1:
            raise ParameterError("eps_r must exceed 1")
        if not self.h > 0:
            raise ParameterError("substrate thickness must be positive")


def _z_air(u: float) -> float:
    f = 6.0 + (2 * math.pi - 6.0) * math.exp(-((30.666 / u) ** 0.7528))
    return ETA0 / (2 * math.pi) * math.log(f / u + math.sqrt(1.0 + (2.0 / u) ** 2))


def _eps_eff(u: float, eps_r: float) -> float:
    a = (1.0 + math.log((u**4 + (u / 52.0) ** 2) / (u**4 + 0.432)) / 49.0
         + math.log(1.0 + (u / 18.1) ** 3) / 18.7)
    b = 0.564 * ((eps_r - 0.9) / (eps_r + 3.0)) ** 0.053
    return (eps_r + 1) / 2 + (eps_r - 1) / 2 * (1.0 + 10.0 / u) ** (-a * b)


def microstrip_analyze(w: float, substrate: SubstrateParams = SubstrateParams()) -> tuple[float, float]:
    """(Z0 in ohms, effective permittivity) of a strip of width ``w`` metres."""
    u = w / substrate.h
    if not U_MIN <= u <= U_MAX:
        raise ParameterError(f"w/h = {u:.4g} outside the model range [{U_MIN}, {U_MAX}]")
    ee = _eps_eff(u, substrate.eps_r)
    return _z_air(u) / math.sqrt(ee), ee


def _wheeler_u(z0: float, eps_r: float) -> float:
    """Closed-form first guess for w/h (narrow and wide strip branches)."""
    a = z0 / 60 * math.sqrt((eps_r + 1) / 2) + (eps_r - 1) / (eps_r + 1) * (0.23 + 0.11 / eps_r)
    u = 8 * math.exp(a) / (math.exp(2 * a) - 2)
    if u <= 2:
        return u
    b = ETA0 * math.pi / (2 * z0 * math.sqrt(eps_r))
    return 2 / math.pi * (b - 1 - math.log(2 * b - 1)
                          + (eps_r - 1) / (2 * eps_r) * (math.log(b - 1) + 0.39 - 0.61 / eps_r))


def microstrip_synthesize(z0: float, substrate: SubstrateParams = SubstrateParams(),
                          freq: float = 680e6) -> tuple[float, float, float]:
    """Width, effective permittivity and guided wavelength for impedance ``z0``.

    The closed-form guess is polished with a root find on the analysis
    formula, so analysis and synthesis are exact inverses.
    """
    if not Z_MIN <= z0 <= Z_MAX:
        raise ParameterError(f"target impedance {z0} outside [{Z_MIN}, {Z_MAX}] ohm")
    if not freq > 0:
        raise ParameterError("frequency must be positive")
    h = substrate.h

    def g(lu: float) -> float:
        return microstrip_analyze(math.exp(lu) * h, substrate)[0] - z0

    u0 = min(max(_wheeler_u(z0, substrate.eps_r), U_MIN * 1.01), U_MAX / 1.01)
    lo, hi = math.log(u0) - 0.5, math.log(u0) + 0.5
    lo, hi = max(lo, math.log(U_MIN)), min(hi, math.log(U_MAX))
    if g(lo) * g(hi) > 0:
        lo, hi = math.log(U_MIN), math.log(U_MAX)
    u = math.exp(brentq(g, lo, hi, xtol=1e-14, rtol=1e-14))
    ee = _eps_eff(u, substrate.eps_r)
    return u * h, ee, constants.c / (freq * math.sqrt(ee))


def microstrip_line_abcd(w: float, length: float, substrate: SubstrateParams,
                         freq: float) -> TwoPortAbcd:
    if length < 0:
        raise ParameterError("line length must be non-negative")
    if length == 0:
        return TwoPortAbcd.identity(freq)
    z0, ee = microstrip_analyze(w, substrate)
    theta = 2 * math.pi * freq * math.sqrt(ee) * length / constants.c
    return tline_abcd(z0, theta, freq)
