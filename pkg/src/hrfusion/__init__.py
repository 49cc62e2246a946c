"""Hybrid radar fusion AoA estimation: a monostatic downlink echo fused with K bistatic uplink bands."""
from .array_core import ArrayGeometry, manifold, steering_vector
from .scene import BandConfig, SceneConfig, make_scenario, synthesize_band
from .harness import ExperimentSpec, MseTable, run_experiment
from .search import GridSpec

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "BandConfig",
    "ExperimentSpec",
    "GridSpec",
    "MseTable",
    "SceneConfig",
    "make_scenario",
    "manifold",
    "run_experiment",
    "steering_vector",
    "synthesize_band",
]
