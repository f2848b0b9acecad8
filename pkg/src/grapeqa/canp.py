"""Context-aware pruning: cluster extra nodes by answer entity, drop the worst.

Each extra node is scored against every answer entity through the relevance
head (context text + answer label + extra label), assigned to its best-scoring
answer entity, and the cluster with the lowest mean score is removed. Cluster
means use exact rational arithmetic so ties and near-ties are decided
reproducibly; all remaining ties break toward the lowest local id.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .relevance import RelevanceScorer, concat_texts
from .working_graph import NodeKind, WorkingGraph


@dataclass
class ClusterAssignment:
    """Extra-node clustering: score matrix, argmax assignment, cluster stats.

    ``psi`` rows follow ``extra_ids`` and columns ``answer_ids``, both in
    ascending local-id order. ``cluster_means`` only covers non-empty
    clusters; ``pruned_cluster`` is the answer entity whose cluster has the
    minimal mean.
    """

    extra_ids: list[int]
    answer_ids: list[int]
    psi: np.ndarray
    assignment: dict[int, int]
    cluster_means: dict[int, float]
    pruned_cluster: int


def score_extra_nodes(scorer: RelevanceScorer, wg: WorkingGraph) -> np.ndarray:
    """Score matrix psi[s, a] over (extra node s, answer entity a) pairs.

    Entry (s, a) is the relevance score of the concatenated context text,
    answer-entity label and extra-node label. Rows and columns are ordered by
    ascending local id.
    """
    context = wg.context_id()
    if context is None:
        raise ValueError("working graph has no context node")
    context_text = wg.nodes[context].label
    extra_ids = wg.ids_of_kind(NodeKind.EXTRA)
    answer_ids = wg.ids_of_kind(NodeKind.ANSWER_ENTITY)
    psi = np.zeros((len(extra_ids), len(answer_ids)))
    for i, s in enumerate(extra_ids):
        for j, a in enumerate(answer_ids):
            text = concat_texts(context_text, wg.nodes[a].label, wg.nodes[s].label)
            _, psi[i, j] = scorer.score_text(text)
    return psi


def assign_clusters(psi: np.ndarray) -> np.ndarray:
    """Argmax column per row; ties resolve to the lowest column index."""
    if psi.size == 0:
        raise ValueError("psi must be non-empty")
    return np.argmax(psi, axis=1)


def cluster_psi(
    psi: np.ndarray, extra_ids: list[int], answer_ids: list[int]
) -> ClusterAssignment:
    """Assignment, exact-rational cluster means and pruned cluster for ``psi``."""
    columns = assign_clusters(psi)
    assignment = {s: answer_ids[c] for s, c in zip(extra_ids, columns)}
    mean_by_answer: dict[int, Fraction] = {}
    for j, a in enumerate(answer_ids):
        member_rows = [i for i, c in enumerate(columns) if c == j]
        if member_rows:
            total = sum(Fraction(float(psi[i, j])) for i in member_rows)
            mean_by_answer[a] = total / len(member_rows)
    pruned = min(mean_by_answer, key=lambda a: (mean_by_answer[a], a))
    return ClusterAssignment(
        extra_ids=extra_ids,
        answer_ids=answer_ids,
        psi=psi,
        assignment=assignment,
        cluster_means={a: float(m) for a, m in mean_by_answer.items()},
        pruned_cluster=pruned,
    )


def compute_clusters(scorer: RelevanceScorer, wg: WorkingGraph) -> ClusterAssignment | None:
    """Full clustering result, or None when the pruning guard applies."""
    extra_ids = wg.ids_of_kind(NodeKind.EXTRA)
    answer_ids = wg.ids_of_kind(NodeKind.ANSWER_ENTITY)
    if len(answer_ids) <= 1 or not extra_ids:
        return None
    return cluster_psi(score_extra_nodes(scorer, wg), extra_ids, answer_ids)


def prune(
    wg: WorkingGraph, scorer: RelevanceScorer, min_survivors: int = 0
) -> WorkingGraph:
    """Remove the least-relevant extra-node cluster and its incident edges.

    Guard: a graph with at most one answer entity or no extra nodes is
    returned unchanged (ids intact). If every extra node falls into a single
    cluster that cluster is still removed; ``min_survivors`` > 0 vetoes any
    pruning that would leave fewer extra nodes than requested.
    """
    clusters = compute_clusters(scorer, wg)
    if clusters is None:
        return wg.copy()
    doomed = {s for s, a in clusters.assignment.items() if a == clusters.pruned_cluster}
    if len(clusters.extra_ids) - len(doomed) < min_survivors:
        return wg.copy()
    out = wg.copy()
    out.remove_nodes(doomed)
    return out
