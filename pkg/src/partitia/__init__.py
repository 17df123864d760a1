"""Spatial random partitions in confining potentials: exact samplers, dynamics and condensation analysis."""

__version__ = "0.1.0"

from .errors import ConfigError, PartitiaError
from .lattice import LatticeWeights, Potential
from .partitions import IntegerPartition, h_from_theta, theta_from_h
from .samplers import CanonicalSampler, SpatialPartitionState, partition_function
from .weights import WeightSequence

__all__ = [
    "__version__", "CanonicalSampler", "ConfigError", "IntegerPartition", "LatticeWeights", "PartitiaError",
    "Potential", "SpatialPartitionState", "WeightSequence", "h_from_theta", "partition_function",
    "theta_from_h",
]
