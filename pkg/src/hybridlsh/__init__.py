"""Hybrid LSH: r-near neighbour reporting that switches per query between
LSH search and a linear scan, using HyperLogLog sketches on the hash buckets
to estimate each query's candidate-set size before searching."""

from hybridlsh.cost import CostParams, Strategy, calibrate, decide, linear_cost, lsh_cost
from hybridlsh.data_io import (
    ClusterSpec,
    SyntheticSpec,
    bimodal_spec,
    generate_synthetic,
    load_bits,
    load_dense,
    load_sparse,
    sample_queries,
)
from hybridlsh.errors import ConfigError, FormatError, HybridLSHError, InputError, ParseError
from hybridlsh.families import FamilyKind, FamilySpec, collision_prob, plan_k, recall_bound
from hybridlsh.metrics import Dataset, Metric, distance, distances_to
from hybridlsh.oracle import brute_force_rnn, recall
from hybridlsh.query import (
    Neighbors,
    QueryContext,
    QueryReport,
    estimate_candidates,
    execute_query,
    hybrid_query,
    linear_search,
    lsh_search,
)
from hybridlsh.sketch import HllSketch, SketchConfig
from hybridlsh.tables import HybridIndex, IndexParams, build_index, load_index, save_index

__version__ = "0.1.0"

__all__ = [
    "CostParams", "Strategy", "calibrate", "decide", "linear_cost", "lsh_cost",
    "ClusterSpec", "SyntheticSpec", "bimodal_spec", "generate_synthetic",
    "load_bits", "load_dense", "load_sparse", "sample_queries",
    "ConfigError", "FormatError", "HybridLSHError", "InputError", "ParseError",
    "FamilyKind", "FamilySpec", "collision_prob", "plan_k", "recall_bound",
    "Dataset", "Metric", "distance", "distances_to",
    "brute_force_rnn", "recall",
    "Neighbors", "QueryContext", "QueryReport", "estimate_candidates", "execute_query",
    "hybrid_query", "linear_search", "lsh_search",
    "HllSketch", "SketchConfig",
    "HybridIndex", "IndexParams", "build_index", "load_index", "save_index",
]
