"""Cross-view geo-localization by multi-query nearest-neighbor matching.

Query buildings are matched to reference buildings of the other view in a
learned embedding space; the k nearest references of every query building
form one cluster of a match graph whose edges reward GPS consistency and
matching scores. A dominant set of that graph picks a coherent subset of
references and their mean GPS is the location estimate.
"""

from ._backend import default as backend
from .affinity import MatchGraph, build_graph, edge_weight
from .domset import DominantSetResult, SolverConfig, solve, solve_graph, verify_dominant
from .geo import GpsCoord, geo_distance_m, mean_gps
from .gmcp import solve_exact, solve_local
from .metric import Embedder, train_embedder
from .pipeline import (
    AccuracyCurve,
    LocalizationResult,
    evaluate,
    localize_domset,
    localize_full_image,
    localize_gmcp,
    localize_nn1,
    localize_random,
)
from .retrieval import BuildingRecord, build_index, knn
from .synth import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "AccuracyCurve",
    "BuildingRecord",
    "DominantSetResult",
    "Embedder",
    "GpsCoord",
    "LocalizationResult",
    "MatchGraph",
    "SolverConfig",
    "SynthConfig",
    "backend",
    "build_graph",
    "build_index",
    "edge_weight",
    "evaluate",
    "generate",
    "geo_distance_m",
    "knn",
    "localize_domset",
    "localize_full_image",
    "localize_gmcp",
    "localize_nn1",
    "localize_random",
    "mean_gps",
    "solve",
    "solve_exact",
    "solve_graph",
    "solve_local",
    "train_embedder",
    "verify_dominant",
]
