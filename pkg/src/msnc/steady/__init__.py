"""Time-domain periodic steady state for diode circuits with transmission lines."""

from .analysis import (
    Mode,
    ModeThresholds,
    UndefinedEfficiencyError,
    classify_mode,
    efficiency,
    multitone_study,
    phase_spread,
    power_sweep,
    saturation_knee,
    transmission_null,
)
from .engine import ConvergenceError, SolverConfig, SteadyStateResult, integrate_to_steady
from .netlist import CircuitNetlist, Element, ExcitationSpec, NetlistError, Port, Tone

__all__ = [
    "CircuitNetlist",
    "ConvergenceError",
    "Element",
    "ExcitationSpec",
    "Mode",
    "ModeThresholds",
    "NetlistError",
    "Port",
    "SolverConfig",
    "SteadyStateResult",
    "Tone",
    "UndefinedEfficiencyError",
    "classify_mode",
    "efficiency",
    "integrate_to_steady",
    "multitone_study",
    "phase_spread",
    "power_sweep",
    "saturation_knee",
    "transmission_null",
]
