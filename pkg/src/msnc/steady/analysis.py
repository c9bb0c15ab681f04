"""Post-processing of steady-state runs: efficiency, hot S-parameters, mode labels."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .engine import SolverConfig, SteadyStateResult, integrate_to_steady
from .netlist import CircuitNetlist, ExcitationSpec, NetlistError


class UndefinedEfficiencyError(ValueError):
    pass


def efficiency(result: SteadyStateResult) -> float:
    """DC load power over the available source power of the excitation."""
    if not result.p_avail > 0:
        raise UndefinedEfficiencyError("efficiency is undefined without input power")
    return result.p_dc / result.p_avail


class Mode(str, enum.Enum):
    RX = "Rx"
    POWER_SAVING = "PowerSaving"
    TRANSITION = "Transition"
    TX = "Tx"


@dataclass(frozen=True)
class ModeThresholds:
    rx_upper: float = -25.0
    ps_upper: float = 0.0
    tx_lower: float = 5.0

    def __post_init__(self) -> None:
        if not self.rx_upper < self.ps_upper <= self.tx_lower:
            raise ValueError("mode thresholds need rx_upper < ps_upper <= tx_lower")


def classify_mode(p_dbm: float, thresholds: ModeThresholds = ModeThresholds()) -> Mode:
    if p_dbm < thresholds.rx_upper:
        return Mode.RX
    if p_dbm < thresholds.ps_upper:
        return Mode.POWER_SAVING
    if p_dbm >= thresholds.tx_lower:
        return Mode.TX
    return Mode.TRANSITION


# hot S-parameters


def _power_waves(res: SteadyStateResult, port: str, z_ref: float) -> tuple[complex, complex]:
    return res.s_waves(port, z_ref)


def _ratio_db(num: complex, den: complex) -> float:
    if den == 0:
        return -math.inf
    return 20 * math.log10(max(abs(num / den), 1e-300))


def _sweep_point(args) -> dict:
    netlist, freq, p, cfg, reverse, thresholds = args
    ports = netlist.ports
    if not ports:
        raise NetlistError("power sweep needs at least one port")
    p1 = ports[0]
    z1 = p1.z_ref
    fwd = integrate_to_steady(netlist.with_driven(*p1.current_from), ExcitationSpec.single(freq, p), cfg)
    a1, b1 = _power_waves(fwd, p1.name, z1)
    row = {
        "p_in_dbm": float(p),
        "p_dc_w": fwd.p_dc,
        "eta": efficiency(fwd),
        "s11_db": _ratio_db(b1, a1),
        "s21_db": math.nan,
        "s12_db": math.nan,
        "s22_db": math.nan,
        "mode": classify_mode(p, thresholds).value,
        "converged": fwd.converged,
        "cycles": fwd.cycles_used,
        "balance_error": fwd.energy.get("balance_error", math.nan),
    }
    if len(ports) > 1:
        p2 = ports[1]
        _, b2 = _power_waves(fwd, p2.name, p2.z_ref)
        row["s21_db"] = _ratio_db(b2, a1)
        if reverse:
            rev = integrate_to_steady(netlist.with_driven(*p2.current_from),
                                      ExcitationSpec.single(freq, p), cfg)
            a2r, b2r = _power_waves(rev, p2.name, p2.z_ref)
            _, b1r = _power_waves(rev, p1.name, z1)
            row["s12_db"] = _ratio_db(b1r, a2r)
            row["s22_db"] = _ratio_db(b2r, a2r)
            row["converged"] = fwd.converged and rev.converged
    return row


def fan_out(fn: Callable, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def power_sweep(netlist: CircuitNetlist, freq: float, p_grid: Sequence[float],
                solver_cfg: SolverConfig | None = None, *, reverse: bool = True,
                thresholds: ModeThresholds = ModeThresholds(), jobs: int = 1) -> list[dict]:
    """Single-tone drive at each level of ``p_grid`` (dBm, available).

    The first port is driven for S11/S21; with ``reverse`` a second run
    driven from the second port gives S12/S22. Power waves use each port's
    reference impedance at the fundamental.
    """
    p_grid = [float(p) for p in p_grid]
    if not p_grid:
        raise ValueError("empty power grid")
    bad = [p for p in p_grid if not -50.0 <= p <= 15.0]
    if bad:
        raise ValueError(f"power levels outside [-50, 15] dBm: {bad}")
    cfg = solver_cfg or SolverConfig(record_nodes=False)
    items = [(netlist, freq, p, cfg, reverse, thresholds) for p in p_grid]
    return fan_out(_sweep_point, items, jobs)


def transmission_null(rows: Sequence[dict], thresholds: ModeThresholds = ModeThresholds()) -> dict:
    """Locate the |S21| minimum and check it is unique inside the power-saving band."""
    p = np.array([r["p_in_dbm"] for r in rows])
    s = np.array([r["s21_db"] for r in rows])
    i_min = int(np.argmin(s))
    band = (p >= thresholds.rx_upper) & (p < thresholds.ps_upper)
    # a unique minimum: no other strict local minimum anywhere on the trace
    local = [i for i in range(len(s))
             if (i == 0 or s[i] < s[i - 1]) and (i == len(s) - 1 or s[i] < s[i + 1])]
    return {
        "p_null_dbm": float(p[i_min]),
        "s21_null_db": float(s[i_min]),
        "in_power_saving_band": bool(band[i_min]),
        "local_minima": [float(p[i]) for i in local],
        "unique": len(local) == 1,
    }


# multi-tone


def _tone_point(args) -> dict:
    netlist, n, p_w, phase, spacing, f_center, cfg = args
    exc = ExcitationSpec.multitone(n, p_w, f_center, spacing, phase)
    res = integrate_to_steady(netlist, exc, cfg)
    return {
        "n_tones": n,
        "phase_step_deg": float(phase),
        "p_in_total_w": float(p_w),
        "p_dc_w": res.p_dc,
        "eta": res.p_dc / p_w if p_w > 0 else 0.0,
        "converged": res.converged,
        "cycles": res.cycles_used,
    }


def multitone_study(netlist: CircuitNetlist, n_tones: Iterable[int], p_grid_w: Sequence[float],
                    phases: Sequence[float] = (0.0,), *, spacing: float = 1e6,
                    f_center: float = 680e6, solver_cfg: SolverConfig | None = None,
                    jobs: int = 1) -> list[dict]:
    """DC output for equal-power tone sets; ``phases`` are adjacent-tone offsets in degrees."""
    ns = [int(n) for n in n_tones]
    if any(n < 1 for n in ns):
        raise ValueError("tone counts must be positive")
    if not len(p_grid_w) or any(not p > 0 for p in p_grid_w):
        raise ValueError("total powers must be positive")
    cfg = solver_cfg or SolverConfig(record_nodes=False)
    items = [(netlist, n, float(p), float(ph), spacing, f_center, cfg)
             for n in ns for ph in phases for p in p_grid_w]
    return fan_out(_tone_point, items, jobs)


def saturation_knee(p_in_w: Sequence[float], p_dc_w: Sequence[float]) -> float:
    """Input power where conversion efficiency P_dc / P_in peaks.

    Past this point DC output grows more slowly than the input, which is
    taken as the onset of saturation. The peak is refined by a parabola in
    log input power through the best grid point and its neighbours; a peak
    on the grid edge returns that edge.
    """
    p = np.asarray(p_in_w, dtype=float)
    d = np.asarray(p_dc_w, dtype=float)
    if p.size == 0 or p.shape != d.shape or np.any(p <= 0):
        raise ValueError("need matching, positive input powers")
    order = np.argsort(p)
    p, d = p[order], d[order]
    eta = d / p
    i = int(np.argmax(eta))
    if i == 0 or i == p.size - 1:
        return float(p[i])
    x = np.log(p[i - 1:i + 2])
    a, b, _ = np.polyfit(x, eta[i - 1:i + 2], 2)
    if a >= 0:
        return float(p[i])
    return float(np.exp(np.clip(-b / (2 * a), x[0], x[2])))


def phase_spread(rows: Sequence[dict]) -> float:
    """(max - min) / mean of DC output across rows."""
    v = np.array([r["p_dc_w"] for r in rows])
    return float((v.max() - v.min()) / v.mean())


# reports


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".10g")
    return str(v)


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str] | None = None) -> str:
    if not rows:
        return ""
    cols = list(columns or rows[0].keys())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in cols])
    return buf.getvalue()


def write_csv(path: str | Path, rows: Sequence[dict], columns: Sequence[str] | None = None) -> Path:
    p = Path(path)
    p.write_text(rows_to_csv(rows, columns))
    return p


def to_jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, (np.floating, np.integer)):
        return to_jsonable(v.item())
    if isinstance(v, dict):
        return {str(k): to_jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [to_jsonable(x) for x in v]
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def write_json(path: str | Path, doc) -> Path:
    p = Path(path)
    p.write_text(json.dumps(to_jsonable(doc), indent=2, sort_keys=True) + "\n")
    return p
