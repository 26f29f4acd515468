"""Distributed slicing: gossip-based ordering and rank-estimation protocols
and a deterministic cycle simulator to compare them."""

from .core import NodeId, SliceSpec, ViewEntry, attribute_rank, slice_of
from .engine import (ChurnCorrelation, ChurnSchedule, Concurrency, Protocol, RunResult,
                     SimConfig, Simulation, run)
from .sampling import SamplingMode

__all__ = [
    "ChurnCorrelation", "ChurnSchedule", "Concurrency", "NodeId", "Protocol", "RunResult",
    "SamplingMode", "SimConfig", "Simulation", "SliceSpec", "ViewEntry", "attribute_rank",
    "run", "slice_of",
]
