"""Working-graph question answering: build, augment, prune, reason, train."""

from .embeddings import DeterministicProvider, EmbeddingProvider, FileEmbeddingProvider
from .errors import DataError, GraphError
from .kg import EntityMatch, KnowledgeGraph, from_triples, link_entities, load_kg
from .pega import (
    ExternalChunker,
    NounChunk,
    RandomWordsChunker,
    RuleBasedChunker,
    augment,
    extract_chunks,
)
from .canp import ClusterAssignment, assign_clusters, compute_clusters, score_extra_nodes
from .canp import prune as canp_prune
from .gnn import GnnModel, load_checkpoint, message_pass, save_checkpoint
from .pipeline import PipelineConfig, build_option_graph
from .relevance import RelevanceScorer, score_node, score_working_graph, threshold_prune
from .training import QAExample, TrainConfig, cross_entropy, evaluate_model, score_option, train
from .working_graph import (
    NodeKind,
    WorkingGraph,
    build_working_graph,
    extract_subgraph,
    init_node_features,
)

__all__ = [
    "ClusterAssignment",
    "DataError",
    "DeterministicProvider",
    "EmbeddingProvider",
    "EntityMatch",
    "ExternalChunker",
    "FileEmbeddingProvider",
    "GnnModel",
    "GraphError",
    "KnowledgeGraph",
    "NodeKind",
    "NounChunk",
    "PipelineConfig",
    "QAExample",
    "RandomWordsChunker",
    "RelevanceScorer",
    "RuleBasedChunker",
    "TrainConfig",
    "WorkingGraph",
    "assign_clusters",
    "augment",
    "build_option_graph",
    "build_working_graph",
    "canp_prune",
    "compute_clusters",
    "cross_entropy",
    "evaluate_model",
    "extract_chunks",
    "extract_subgraph",
    "from_triples",
    "init_node_features",
    "link_entities",
    "load_checkpoint",
    "load_kg",
    "message_pass",
    "save_checkpoint",
    "score_extra_nodes",
    "score_node",
    "score_option",
    "score_working_graph",
    "threshold_prune",
    "train",
]

__version__ = "0.1.0"
