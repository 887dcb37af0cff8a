"""Spike-driven stereo image restoration on a small numpy autodiff engine."""

from .network import NetworkConfig, StereoRestorer, RestorationOutput, temporal_replicate, temporal_average
from .blocks import StereoPair
from .neuron import LifParams, lif_forward
from .profiler import EnergyLedger, energy

__version__ = "0.1.0"

__all__ = [
    "NetworkConfig",
    "StereoRestorer",
    "RestorationOutput",
    "StereoPair",
    "LifParams",
    "lif_forward",
    "EnergyLedger",
    "energy",
    "temporal_replicate",
    "temporal_average",
]
