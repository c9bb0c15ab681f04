"""Microstrip matching-network models and their synthesis."""

from .design import (
    GENES,
    DesignConfig,
    DesignReport,
    design_matching_networks,
    evaluate_design,
    presynthesize,
    topology_to_vector,
    vector_to_topology,
)
from .ga import GaConfig, GaResult, ga_optimize
from .microstrip import (
    ParameterError,
    SubstrateParams,
    microstrip_analyze,
    microstrip_line_abcd,
    microstrip_synthesize,
)
from .stubs import (
    PUBLISHED_NETWORKS,
    MnGeometry,
    StubTopology,
    loading_chain_abcd,
    radial_stub_admittance,
    stub_network_abcd,
    z_a_from_chain,
)

__all__ = [
    "GENES",
    "PUBLISHED_NETWORKS",
    "DesignConfig",
    "DesignReport",
    "GaConfig",
    "GaResult",
    "MnGeometry",
    "ParameterError",
    "StubTopology",
    "SubstrateParams",
    "design_matching_networks",
    "evaluate_design",
    "ga_optimize",
    "loading_chain_abcd",
    "microstrip_analyze",
    "microstrip_line_abcd",
    "microstrip_synthesize",
    "presynthesize",
    "radial_stub_admittance",
    "stub_network_abcd",
    "topology_to_vector",
    "vector_to_topology",
    "z_a_from_chain",
]
