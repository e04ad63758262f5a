"""Spatiotemporal graph filtering for collaborative multi-view object localization."""

from .core import GaussianBelief, NotSPD, ObservationGraph, TrajectoryHistory, complete_edges, invert_spd, is_spd
from .fusion import FilterState, fuse, stgf_step
from .stgnn import ModelParams

__version__ = "0.1.0"
