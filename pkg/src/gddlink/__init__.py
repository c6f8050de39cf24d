"""Entity resolution on property graphs driven by graph differential dependencies."""

from .gdd import DistanceConstraint, Gdd, discover_gdds, rank_rules
from .graph import Node, PropertyGraph, load_graph
from .patterns import GraphPattern, match_pattern
from .pipeline import PipelineConfig, run_pipeline

__all__ = [
    "DistanceConstraint",
    "Gdd",
    "GraphPattern",
    "Node",
    "PipelineConfig",
    "PropertyGraph",
    "discover_gdds",
    "load_graph",
    "match_pattern",
    "rank_rules",
    "run_pipeline",
]
