"""End-to-end working-graph construction for one (example, option) pair.

Stages: link entities, extract the subgraph, attach the context node,
initialize features, score relevance, then optionally threshold-prune,
augment with noun chunks, and cluster-prune. Construction is a pure function
of its inputs, so graphs for many examples can be built independently.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .canp import prune as canp_prune
from .embeddings import EmbeddingProvider
from .kg import MATCH_SOURCE_ANSWER, MATCH_SOURCE_QUESTION, KnowledgeGraph, link_entities
from .pega import Chunker, augment, extract_chunks
from .relevance import RelevanceScorer, score_working_graph, threshold_prune
from .working_graph import (
    WorkingGraph,
    build_working_graph,
    extract_subgraph,
    init_node_features,
)

STAGE_RAW = "raw"
STAGE_PEGA = "pega"
STAGE_CANP = "canp"


@dataclass
class PipelineConfig:
    """Which optional stages run and how."""

    pega: bool = False
    canp: bool = False
    chunker: Chunker | None = None
    threshold: float = 0.0
    canp_min_survivors: int = 0

    def __post_init__(self) -> None:
        if self.pega and self.chunker is None:
            raise ValueError("pega=True requires a chunker")


@dataclass
class OptionGraphs:
    """Stage-tagged graphs for one answer option; ``final`` is the last stage."""

    stages: list[tuple[str, WorkingGraph]] = field(default_factory=list)

    @property
    def final(self) -> WorkingGraph:
        return self.stages[-1][1]

    def stage(self, name: str) -> WorkingGraph | None:
        for stage_name, wg in self.stages:
            if stage_name == name:
                return wg
        return None


def build_option_graph(
    kg: KnowledgeGraph,
    provider: EmbeddingProvider,
    scorer: RelevanceScorer,
    question: str,
    option: str,
    config: PipelineConfig,
    example_id: str | None = None,
    option_index: int = 0,
) -> OptionGraphs:
    """Run the configured pipeline and return every produced stage."""
    q_matches = link_entities(question, kg, source=MATCH_SOURCE_QUESTION)
    a_matches = link_entities(option, kg, source=MATCH_SOURCE_ANSWER)
    sub = extract_subgraph(kg, q_matches, a_matches, option_index=option_index)
    wg = build_working_graph(sub, question, option)
    wg = init_node_features(wg, provider)
    wg = score_working_graph(scorer, wg)
    if config.threshold > 0.0:
        wg = threshold_prune(wg, config.threshold)
    out = OptionGraphs(stages=[(STAGE_RAW, wg)])
    if config.pega:
        chunks = extract_chunks(
            config.chunker, question, option, example_id=example_id, option_idx=option_index
        )
        wg = augment(wg, chunks, provider)
        out.stages.append((STAGE_PEGA, wg))
    if config.canp:
        wg = canp_prune(wg, scorer, min_survivors=config.canp_min_survivors)
        out.stages.append((STAGE_CANP, wg))
    return out
