"""Node-count statistics over working graphs.

Means are kept as exact rationals over all generated graphs and only rounded
to two decimals for display. Uniqueness and overlap compare normalized node
labels: how many distinct chunk labels exist, how many distinct KG-derived
labels, and how large their intersection is.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .embeddings import EmbeddingProvider
from .errors import DataError
from .kg import KnowledgeGraph, normalize
from .pipeline import PipelineConfig, build_option_graph
from .relevance import RelevanceScorer
from .training import QAExample
from .working_graph import KG_DERIVED_KINDS, NodeKind, WorkingGraph

_KIND_KEYS = {
    NodeKind.QUESTION_ENTITY: "question_entity",
    NodeKind.ANSWER_ENTITY: "answer_entity",
    NodeKind.EXTRA: "extra",
    NodeKind.NOUN_CHUNK: "noun_chunk",
}


@dataclass
class StatsReport:
    num_examples: int
    num_graphs: int
    means: dict[str, Fraction]
    unique_kg_labels: int
    unique_chunk_labels: int
    overlap: int

    def to_json_obj(self) -> dict:
        return {
            "num_examples": self.num_examples,
            "num_graphs": self.num_graphs,
            "means": {k: float(f"{float(v):.2f}") for k, v in self.means.items()},
            "means_exact": {
                k: [v.numerator, v.denominator] for k, v in self.means.items()
            },
            "unique_kg_labels": self.unique_kg_labels,
            "unique_chunk_labels": self.unique_chunk_labels,
            "overlap": self.overlap,
        }


def compute_stats(graphs: list[WorkingGraph], num_examples: int) -> StatsReport:
    """Count node kinds and label uniqueness over final-stage graphs."""
    if not graphs:
        raise DataError("no working graphs to aggregate")
    totals = {key: 0 for key in _KIND_KEYS.values()}
    kg_labels: set[str] = set()
    chunk_labels: set[str] = set()
    for wg in graphs:
        counts = wg.kind_counts()
        for kind, key in _KIND_KEYS.items():
            totals[key] += counts[kind]
        for node in wg.nodes.values():
            if node.kind in KG_DERIVED_KINDS:
                kg_labels.add(normalize(node.label))
            elif node.kind is NodeKind.NOUN_CHUNK:
                chunk_labels.add(normalize(node.label))
    n = len(graphs)
    return StatsReport(
        num_examples=num_examples,
        num_graphs=n,
        means={key: Fraction(total, n) for key, total in totals.items()},
        unique_kg_labels=len(kg_labels),
        unique_chunk_labels=len(chunk_labels),
        overlap=len(kg_labels & chunk_labels),
    )


def stats_from_pipeline(
    kg: KnowledgeGraph,
    provider: EmbeddingProvider,
    scorer: RelevanceScorer,
    examples: list[QAExample],
    config: PipelineConfig,
) -> StatsReport:
    """Build the final-stage graph for every option and aggregate counts."""
    if not examples:
        raise DataError("dataset is empty")
    graphs = []
    for example in examples:
        for idx, option in enumerate(example.options):
            stages = build_option_graph(
                kg, provider, scorer, example.question, option, config,
                example_id=example.id, option_index=idx,
            )
            graphs.append(stages.final)
    return compute_stats(graphs, num_examples=len(examples))
