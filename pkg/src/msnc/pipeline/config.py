"""Scenario configuration: JSON schema, defaults and full (non fail-fast) validation."""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from ..diode import DiodeParams
from ..steady import ModeThresholds, SolverConfig
from ..synth import DesignConfig, StubTopology, SubstrateParams
from ..synth.design import DEFAULT_BOUNDS, GENES
from ..synth.stubs import PUBLISHED_NETWORKS

SCENARIOS = ("fig4", "fig7", "fig9-impedances", "fig10-sparams", "fig13-efficiency",
             "fig14-multitone", "fig15-phase", "design-flow")

DEFAULT_CONFIG = "default_config.json"
REFERENCE_DESIGN = "reference_design.json"


class ConfigError(ValueError):
    """Raised with every schema violation found, one per line."""

    def __init__(self, errors: list[str]):
        super().__init__("\n".join(errors))
        self.errors = list(errors)


def _data_text(name: str) -> str:
    return resources.files("msnc.data").joinpath(name).read_text()


def default_document() -> dict:
    return json.loads(_data_text(DEFAULT_CONFIG))


def reference_networks() -> dict:
    return json.loads(_data_text(REFERENCE_DESIGN))


@dataclass(frozen=True)
class MultitoneSettings:
    n_tones: tuple[int, ...]
    p_total_w: tuple[float, ...]
    phases_deg: tuple[float, ...]
    phase_n_tones: int
    phase_p_total_w: float
    spacing_hz: float
    samples_per_period: int


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    seed: int
    jobs: int
    output_dir: str
    freq_hz: float
    k_grid: tuple[float, ...]
    power_grid_dbm: tuple[float, ...]
    frequency_grid_hz: tuple[float, ...]
    diode_power_grid_dbm: tuple[float, ...]
    diode_frequencies_hz: tuple[float, ...]
    sweep_powers_dbm: tuple[float, ...]
    z0: float
    r_load: float
    c_rect: float
    line_loss: float
    thresholds: ModeThresholds
    substrate: SubstrateParams
    diode: DiodeParams
    design: DesignConfig
    solver: SolverConfig
    multitone: MultitoneSettings
    networks: StubTopology
    document: dict

    def echo(self) -> dict:
        """The resolved configuration document (what was actually run)."""
        return copy.deepcopy(self.document)


# schema helpers: every check appends to ``errs`` and returns a usable fallback


def _get(doc: dict, path: str, errs: list[str]) -> Any:
    cur: Any = doc
    for part in path.split("."):
        if not isinstance(cur, dict) or part not in cur:
            errs.append(f"{path}: missing")
            return None
        cur = cur[part]
    return cur


def _num(doc: dict, path: str, errs: list[str], *, lo: float = -math.inf, hi: float = math.inf,
         lo_open: bool = False, integer: bool = False) -> float | None:
    v = _get(doc, path, errs)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        errs.append(f"{path}: expected a finite number, got {v!r}")
        return None
    if integer and int(v) != v:
        errs.append(f"{path}: expected an integer, got {v!r}")
        return None
    bad_lo = v <= lo if lo_open else v < lo
    if bad_lo or v > hi:
        left = "(" if lo_open else "["
        errs.append(f"{path}: {v!r} outside {left}{lo:g}, {hi:g}]")
        return None
    return int(v) if integer else float(v)


def _grid(doc: dict, path: str, errs: list[str], *, lo: float = -math.inf,
          hi: float = math.inf) -> tuple[float, ...] | None:
    """A grid is an explicit list, {start, stop, step} or {start, stop, points}."""
    v = _get(doc, path, errs)
    if v is None:
        return None
    if isinstance(v, list):
        if not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            errs.append(f"{path}: grid values must be numbers")
            return None
        vals = [float(x) for x in v]
    elif isinstance(v, dict):
        n0 = len(errs)
        start = _num(v, "start", errs)
        stop = _num(v, "stop", errs)
        if "step" in v and "points" in v or not ("step" in v or "points" in v):
            errs.append("needs exactly one of step or points")
        elif "step" in v:
            step = _num(v, "step", errs, lo=0, lo_open=True)
            if None not in (start, stop, step) and len(errs) == n0:
                n = int(math.floor((stop - start) / step + 1e-9)) + 1
                vals = [round(start + i * step, 10) for i in range(max(n, 0))]
        else:
            pts = _num(v, "points", errs, lo=1, integer=True)
            if None not in (start, stop, pts) and len(errs) == n0:
                vals = [float(x) for x in np.linspace(start, stop, int(pts))]
        if len(errs) > n0:
            errs[n0:] = [f"{path}.{e}" if not e.startswith("needs") else f"{path}: {e}"
                         for e in errs[n0:]]
            return None
    else:
        errs.append(f"{path}: expected a list or a {{start, stop, step|points}} object")
        return None
    if not vals:
        errs.append(f"{path}: grid is empty")
        return None
    if any(b <= a for a, b in zip(vals, vals[1:])):
        errs.append(f"{path}: grid must be strictly increasing")
        return None
    if vals[0] < lo or vals[-1] > hi:
        errs.append(f"{path}: values must lie in [{lo:g}, {hi:g}]")
        return None
    return tuple(vals)


def _networks(v: Any, errs: list[str]) -> StubTopology | None:
    if v == "published":
        return PUBLISHED_NETWORKS
    if v == "reference":
        v = reference_networks()
    if not isinstance(v, dict):
        errs.append("networks: expected 'reference', 'published' or an {MN1, MN2} geometry object")
        return None
    try:
        return StubTopology.from_dict(v)
    except (KeyError, TypeError, ValueError) as exc:
        errs.append(f"networks: {exc}")
        return None


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and "start" not in v:
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_document(user: dict | None = None, **overrides: Any) -> dict:
    """Default document overlaid with a user document and top-level overrides."""
    doc = default_document()
    if user:
        doc = _merge(doc, user)
    for k, v in overrides.items():
        if v is not None:
            doc[k] = v
    return doc


def build_config(doc: dict) -> ScenarioConfig:
    """Validate a resolved document; raises ConfigError listing every problem."""
    errs: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["<root>: expected a JSON object"])
    scen = _get(doc, "scenario", errs)
    if scen is not None and scen not in SCENARIOS:
        errs.append(f"scenario: unknown {scen!r}; choose from {', '.join(SCENARIOS)}")
    seed = _num(doc, "seed", errs, lo=0, hi=2**64 - 1, integer=True)
    jobs = _num(doc, "jobs", errs, lo=1, hi=1024, integer=True)
    out = _get(doc, "output_dir", errs)
    if out is not None and not (isinstance(out, str) and out):
        errs.append("output_dir: expected a nonempty string")
    freq = _num(doc, "freq_hz", errs, lo=0, lo_open=True)
    k_grid = _grid(doc, "k_grid", errs, lo=1e-9, hi=1.0)
    p_grid = _grid(doc, "power_grid_dbm", errs, lo=-50.0, hi=15.0)
    f_grid = _grid(doc, "frequency_grid_hz", errs, lo=1.0)
    d_grid = _grid(doc, "diode_sweep.power_grid_dbm", errs, lo=-80.0, hi=30.0)
    d_freqs = _grid(doc, "diode_sweep.frequencies_hz", errs, lo=1.0)
    s_pows = _grid(doc, "sweep_powers_dbm", errs, lo=-50.0, hi=15.0)

    z0 = _num(doc, "components.z0_ohm", errs, lo=0, lo_open=True)
    r_load = _num(doc, "components.r_load_ohm", errs, lo=0, lo_open=True)
    c_rect = _num(doc, "components.c_rect_f", errs, lo=0, lo_open=True)
    loss = _num(doc, "components.line_loss", errs, lo=0, hi=0.5)

    th = [_num(doc, f"thresholds.{k}", errs) for k in ("rx_upper_dbm", "ps_upper_dbm", "tx_lower_dbm")]
    thresholds = ModeThresholds()
    if None not in th:
        try:
            thresholds = ModeThresholds(*th)
        except ValueError as exc:
            errs.append(f"thresholds: {exc}")

    sub = {k: _num(doc, f"substrate.{k}", errs) for k in ("eps_r", "h_m", "tan_d", "t_metal_m")}
    substrate = SubstrateParams()
    if None not in sub.values():
        try:
            substrate = SubstrateParams(sub["eps_r"], sub["h_m"], sub["tan_d"], sub["t_metal_m"])
        except ValueError as exc:
            errs.append(f"substrate: {exc}")

    dnames = ("i_s", "n", "c_j0", "v_j", "r_s", "b_v", "i_bv", "e_g", "temperature")
    dv = {k: _num(doc, f"diode.{k}", errs) for k in dnames}
    diode = DiodeParams()
    if None not in dv.values():
        try:
            diode = DiodeParams(**dv)
        except ValueError as exc:
            errs.append(f"diode: {exc}")

    spp = _num(doc, "solver.samples_per_period", errs, lo=16, hi=8192, integer=True)
    max_cycles = _num(doc, "solver.max_cycles", errs, lo=2, integer=True)
    accel = _get(doc, "solver.accelerate", errs)
    if accel is not None and not isinstance(accel, bool):
        errs.append("solver.accelerate: expected true or false")
    solver = SolverConfig(record_nodes=False)
    if None not in (spp, max_cycles) and isinstance(accel, bool):
        solver = replace(solver, samples_per_period=spp, max_cycles=max_cycles, accelerate=accel)

    ga = {k: _num(doc, f"ga.{k}", errs, lo=0) for k in
          ("w_impedance", "w_s11", "w_efficiency")}
    pop = _num(doc, "ga.population", errs, lo=4, integer=True)
    trials = _num(doc, "ga.max_trials", errs, lo=4, integer=True)
    ga_spp = _num(doc, "ga.samples_per_period", errs, lo=16, hi=8192, integer=True)
    drives = _grid(doc, "ga.drives_dbm", errs, lo=-50.0, hi=15.0)
    if None not in (pop, trials) and trials < pop:
        errs.append("ga.max_trials: must be at least ga.population")
    bounds = _get(doc, "ga.bounds", errs)
    bounds_t = tuple(DEFAULT_BOUNDS[g] for g in GENES)
    if isinstance(bounds, dict):
        unknown = sorted(set(bounds) - set(GENES))
        if unknown:
            errs.append(f"ga.bounds: unknown genes {unknown}")
        merged = dict(zip(GENES, bounds_t))
        for g, b in bounds.items():
            ok = (isinstance(b, list) and len(b) == 2
                  and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in b)
                  and b[0] <= b[1])
            if not ok:
                errs.append(f"ga.bounds.{g}: expected [lo, hi] with lo <= hi")
            elif g in merged:
                merged[g] = (float(b[0]), float(b[1]))
        bounds_t = tuple(merged[g] for g in GENES)
    elif bounds is not None:
        errs.append("ga.bounds: expected an object mapping gene names to [lo, hi]")

    mt = _get(doc, "multitone", errs)
    n_tones = _get(doc, "multitone.n_tones", errs) if isinstance(mt, dict) else None
    if n_tones is not None and not (isinstance(n_tones, list) and n_tones
                                    and all(isinstance(n, int) and not isinstance(n, bool) and n >= 1
                                            for n in n_tones)):
        errs.append("multitone.n_tones: expected a nonempty list of positive integers")
        n_tones = None
    p_uw = _grid(doc, "multitone.p_total_uw", errs, lo=1e-6)
    phases = _grid(doc, "multitone.phases_deg", errs, lo=0.0, hi=359.999)
    ph_n = _num(doc, "multitone.phase_n_tones", errs, lo=1, integer=True)
    ph_p = _num(doc, "multitone.phase_p_total_uw", errs, lo=0, lo_open=True)
    spacing = _num(doc, "multitone.spacing_hz", errs, lo=0, lo_open=True)
    mt_spp = _num(doc, "multitone.samples_per_period", errs, lo=16, hi=8192, integer=True)

    nets = _get(doc, "networks", errs)
    networks = _networks(nets, errs) if nets is not None else None

    design = None
    if not errs:
        design = replace(
            DesignConfig(), freq=freq, z0=z0, r_load=r_load, c_rect=c_rect, line_loss=loss,
            diode=diode, drives_dbm=drives, thresholds=thresholds, w_impedance=ga["w_impedance"],
            w_s11=ga["w_s11"], w_efficiency=ga["w_efficiency"], bounds=bounds_t, population=pop,
            max_trials=trials, seed=seed,
            solver=SolverConfig(samples_per_period=ga_spp, record_nodes=False))
        errs += [f"ga: {e}" for e in design.validate()]
    if errs:
        raise ConfigError(errs)
    multitone = MultitoneSettings(tuple(n_tones), tuple(p * 1e-6 for p in p_uw), phases, ph_n,
                                  ph_p * 1e-6, spacing, mt_spp)
    return ScenarioConfig(scen, seed, jobs, out, freq, k_grid, p_grid, f_grid, d_grid, d_freqs,
                          s_pows, z0, r_load, c_rect, loss, thresholds, substrate, diode, design,
                          solver, multitone, networks, copy.deepcopy(doc))


def load_document(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"{path}: cannot read ({exc.strerror})"]) from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError([f"{path}: top level must be a JSON object"])
    return doc


def validate_config(path: str | Path) -> ScenarioConfig:
    """Load, overlay on defaults, and validate; raises ConfigError with every violation."""
    return build_config(resolve_document(load_document(path)))
