from .config import PipelineConfig, load_config
from .grid import Converter, GridGraph, build_quotient_graph, connected_components
from .linear_model import build_linear_statespace, verify_lemma1
from .orientation import count_acyclic_orientations, orient_converters
from .pipeline import analyze_grid, run_experiment
from .poset import Poset, classify_structure, poset_from_dag
from .synthesis import synthesize_centralized, synthesize_leader_follower

__all__ = [
    "Converter",
    "GridGraph",
    "PipelineConfig",
    "Poset",
    "analyze_grid",
    "build_linear_statespace",
    "build_quotient_graph",
    "classify_structure",
    "connected_components",
    "count_acyclic_orientations",
    "load_config",
    "orient_converters",
    "poset_from_dag",
    "run_experiment",
    "synthesize_centralized",
    "synthesize_leader_follower",
    "verify_lemma1",
]
