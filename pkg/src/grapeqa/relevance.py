"""Node relevance against the QA context: encoder head plus scalar score.

The scorer embeds the concatenation of the context text and a node label,
projects it through a fixed head, and squashes a linear readout through a
sigmoid so every score lands in (0, 1). The same head is reused by the
cluster pruner for its context/answer/extra-node triples.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .embeddings import EmbeddingProvider
from .errors import GraphError
from .working_graph import WorkingGraph


def concat_texts(*parts: str) -> str:
    """Single-space concatenation used for every scorer input."""
    return " ".join(parts)


@dataclass
class RelevanceScorer:
    """Deterministic importance scorer: encoder -> head matrix -> sigmoid(w . v).

    Weights are fixed at construction; scoring the same texts always returns
    bit-identical results, which keeps downstream pruning reproducible.
    """

    encoder: EmbeddingProvider
    head_weights: np.ndarray  # (score_dim, encoder.dim)
    score_weights: np.ndarray  # (score_dim,)

    def __post_init__(self) -> None:
        if self.head_weights.ndim != 2 or self.head_weights.shape[1] != self.encoder.dim:
            raise ValueError(
                f"head_weights shape {self.head_weights.shape} does not map "
                f"encoder dim {self.encoder.dim}"
            )
        if self.score_weights.shape != (self.head_weights.shape[0],):
            raise ValueError(
                f"score_weights shape {self.score_weights.shape} does not match "
                f"head output dim {self.head_weights.shape[0]}"
            )

    @property
    def score_dim(self) -> int:
        return self.head_weights.shape[0]

    @classmethod
    def seeded(
        cls, encoder: EmbeddingProvider, score_dim: int = 32, seed: int = 0
    ) -> "RelevanceScorer":
        rng = np.random.default_rng(seed)
        head = rng.standard_normal((score_dim, encoder.dim)) / np.sqrt(encoder.dim)
        weights = rng.standard_normal(score_dim) / np.sqrt(score_dim)
        return cls(encoder, head, weights)

    def score_text(self, text: str) -> tuple[np.ndarray, float]:
        embedding = self.head_weights @ self.encoder.encode(text)
        score = float(expit(self.score_weights @ embedding))
        return embedding, score


def score_node(
    scorer: RelevanceScorer, context_text: str, node_label: str
) -> tuple[np.ndarray, float]:
    """Score one node label against the context; returns (embedding, score)."""
    if not context_text.strip() or not node_label.strip():
        raise ValueError("context text and node label must be non-empty")
    return scorer.score_text(concat_texts(context_text, node_label))


def score_working_graph(scorer: RelevanceScorer, wg: WorkingGraph) -> WorkingGraph:
    """Populate the relevance map for every KG-derived node.

    Context and noun-chunk nodes stay unscored; a graph without KG nodes comes
    back with an empty relevance map.
    """
    context = wg.context_id()
    if context is None:
        raise GraphError("cannot score a working graph without a context node")
    context_text = wg.nodes[context].label
    out = wg.copy()
    for local_id in out.kg_node_ids():
        _, score = score_node(scorer, context_text, out.nodes[local_id].label)
        out.relevance[local_id] = score
    return out


def threshold_prune(wg: WorkingGraph, threshold: float = 0.0) -> WorkingGraph:
    """Drop KG-derived nodes scoring below ``threshold`` plus incident edges.

    Context and noun-chunk nodes are never removed. The default threshold 0 is
    a no-op because sigmoid scores are strictly positive.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    out = wg.copy()
    if threshold == 0.0:
        return out
    kg_ids = out.kg_node_ids()
    unscored = [i for i in kg_ids if i not in out.relevance]
    if unscored:
        raise GraphError(f"relevance map missing scores for nodes {unscored}")
    doomed = {i for i in kg_ids if out.relevance[i] < threshold}
    out.remove_nodes(doomed)
    return out
