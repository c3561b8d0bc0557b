"""Simulation and verification tools for opinion dynamics with biased
assimilation on the unit sphere."""

from .geometry import (BadFile, Configuration, CorrelationMatrix, DegenerateUpdate,
                       Interaction, UpdateRule, apply_interaction, correlation,
                       flip_agent, is_polarized, load_config, predicted_row,
                       save_config)
from .analysis import (ClusterPartition, NotClusterable, Potentials, clusters,
                       epsilon_base, is_inactive, is_separable, potentials)

__version__ = "0.1.0"

__all__ = [
    "BadFile", "Configuration", "CorrelationMatrix", "DegenerateUpdate",
    "Interaction", "UpdateRule", "apply_interaction", "correlation", "flip_agent",
    "is_polarized", "load_config", "predicted_row", "save_config",
    "ClusterPartition", "NotClusterable", "Potentials", "clusters",
    "epsilon_base", "is_inactive", "is_separable", "potentials",
]
