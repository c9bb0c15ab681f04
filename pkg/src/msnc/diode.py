"""Schottky diode device model and large-signal describing-function extraction.

Static current is the Shockley law plus a reverse-breakdown exponential;
the junction capacitance is the abrupt depletion law with SPICE's linear
forward-bias extension above ``FC * VJ``. Defaults are the SMS7621 SPICE card.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import constants

EXP_CLAMP = 80.0
FC = 0.5
GRADING = 0.5


@dataclass(frozen=True)
class DiodeParams:
    i_s: float = 4e-8
    n: float = 1.05
    c_j0: float = 0.1e-12
    v_j: float = 0.51
    r_s: float = 12.0
    b_v: float = 3.0
    i_bv: float = 1e-5
    e_g: float = 0.69
    temperature: float = 298.15

    def __post_init__(self) -> None:
        checks = {
            "i_s": self.i_s > 0,
            "n": self.n >= 1,
            "c_j0": self.c_j0 >= 0,
            "v_j": 0 < self.v_j < 2,
            "r_s": self.r_s >= 0,
            "b_v": self.b_v > 0,
            "temperature": self.temperature > 0,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValueError(f"invalid diode parameters: {', '.join(bad)}")

    @property
    def v_t(self) -> float:
        return constants.k * self.temperature / constants.e

    @property
    def alpha(self) -> float:
        return 1.0 / (self.n * self.v_t)

    def scaled(self, count: float) -> "DiodeParams":
        """Equivalent single device for ``count`` identical diodes in parallel."""
        return replace(self, i_s=self.i_s * count, i_bv=self.i_bv * count,
                       c_j0=self.c_j0 * count, r_s=self.r_s / count)


SMS7621 = DiodeParams()


def _expl(x):
    """exp(x) - 1 with linear continuation above EXP_CLAMP (C1 at the knee)."""
    x = np.asarray(x, dtype=float)
    xc = np.minimum(x, EXP_CLAMP)
    return np.where(x > EXP_CLAMP, math.exp(EXP_CLAMP) * (1.0 + x - EXP_CLAMP) - 1.0, np.expm1(xc))


def _dexpl(x):
    x = np.asarray(x, dtype=float)
    return np.exp(np.minimum(x, EXP_CLAMP))


def id_static(v, params: DiodeParams = SMS7621):
    """Junction current (A) at junction voltage ``v`` (V)."""
    a = params.alpha
    fwd = params.i_s * _expl(a * np.asarray(v, dtype=float))
    # breakdown tail, shifted so that I(0) == 0 exactly
    bd = params.i_bv * (_expl(-a * (np.asarray(v, dtype=float) + params.b_v)) - math.expm1(-a * params.b_v))
    out = fwd - bd
    return float(out) if np.ndim(out) == 0 else out


def gd_static(v, params: DiodeParams = SMS7621):
    """dI/dv of :func:`id_static`."""
    a = params.alpha
    v = np.asarray(v, dtype=float)
    out = a * params.i_s * _dexpl(a * v) + a * params.i_bv * _dexpl(-a * (v + params.b_v))
    return float(out) if np.ndim(out) == 0 else out


def junction_cap(v, params: DiodeParams = SMS7621):
    v = np.asarray(v, dtype=float)
    vj, m, cj0 = params.v_j, GRADING, params.c_j0
    knee = FC * vj
    dep = cj0 / np.sqrt(np.maximum(1.0 - np.minimum(v, knee) / vj, 1e-300))
    f2 = (1.0 - FC) ** (1.0 + m)
    lin = cj0 / f2 * (1.0 - FC * (1.0 + m) + m * v / vj)
    out = np.where(v <= knee, dep, lin)
    return float(out) if np.ndim(out) == 0 else out


def junction_cap_deriv(v, params: DiodeParams = SMS7621):
    v = np.asarray(v, dtype=float)
    vj, m, cj0 = params.v_j, GRADING, params.c_j0
    knee = FC * vj
    vv = np.minimum(v, knee)
    dep = cj0 * m / vj * (1.0 - vv / vj) ** (-m - 1.0)
    lin = cj0 * m / (vj * (1.0 - FC) ** (1.0 + m))
    out = np.where(v <= knee, dep, lin)
    return float(out) if np.ndim(out) == 0 else out


def junction_charge(v, params: DiodeParams = SMS7621):
    """Depletion charge, the integral of :func:`junction_cap` from 0 to ``v``."""
    v = np.asarray(v, dtype=float)
    vj, m, cj0 = params.v_j, GRADING, params.c_j0
    knee = FC * vj
    vv = np.minimum(v, knee)
    q_dep = cj0 * vj / (1.0 - m) * (1.0 - (1.0 - vv / vj) ** (1.0 - m))
    f2 = (1.0 - FC) ** (1.0 + m)
    dv = np.maximum(v - knee, 0.0)
    q_lin = cj0 / f2 * ((1.0 - FC * (1.0 + m)) * dv + m / (2 * vj) * ((knee + dv) ** 2 - knee**2))
    out = q_dep + q_lin
    return float(out) if np.ndim(out) == 0 else out


def small_signal_admittance(v_bias: float, freq: float, params: DiodeParams = SMS7621) -> complex:
    """Junction admittance G + jwC at ``v_bias`` (series resistance excluded)."""
    return complex(gd_static(v_bias, params), 2 * math.pi * freq * junction_cap(v_bias, params))


def small_signal_impedance(v_bias: float, freq: float, params: DiodeParams = SMS7621) -> complex:
    """Whole-device impedance r_s + 1/(G + jwC)."""
    return params.r_s + 1.0 / small_signal_admittance(v_bias, freq, params)


def antiparallel_current(v, params: DiodeParams = SMS7621):
    return id_static(v, params) - id_static(-np.asarray(v, dtype=float), params)


@dataclass(frozen=True)
class LargeSignalPoint:
    drive: float
    freq: float
    z_d: complex
    y_d: complex
    v_amp: float
    config: str = "series"
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def y_bank(self) -> complex:
        """Admittance of the four-diode shunt bank."""
        return 4 * self.y_d


def large_signal_extract(excitation, config: str = "series", params: DiodeParams = SMS7621,
                         solver_cfg=None) -> LargeSignalPoint:
    """Fundamental-frequency impedance of a diode driven at one tone.

    ``series``: source -> diode -> ground; returns z_d = V1/I1 across the
    whole device and y_d = 1/z_d.
    ``antiparallel-pair``: source -> two opposed diodes to ground; y_d is
    half the pair admittance so that the four-diode bank is ``4*y_d``.
    """
    from .circuits import diode_bench
    from .steady import SolverConfig, integrate_to_steady

    if len(excitation.tones) != 1:
        raise ValueError("large-signal extraction needs exactly one tone")
    if config not in ("series", "antiparallel-pair"):
        raise ValueError(f"unknown diode topology {config!r}")
    cfg = solver_cfg or SolverConfig()
    net = diode_bench(config, params, excitation.z_source)
    res = integrate_to_steady(net, excitation, cfg)
    v1, i1 = res.fundamental_phasors["DUT"]
    if config == "series":
        z = v1 / i1
        y = 1 / z
    else:
        y = i1 / v1 / 2
        z = 1 / y
    tone = excitation.tones[0]
    return LargeSignalPoint(tone.p_avail, tone.freq, complex(z), complex(y), abs(v1), config,
                            {"cycles_used": res.cycles_used, "converged": res.converged})
