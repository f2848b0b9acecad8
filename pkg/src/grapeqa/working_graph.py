"""Per-option working graphs: subgraph extraction and QA-context assembly.

A working graph (WG) is the typed multigraph scored by the GNN for one
(question, answer-option) pair. Its nodes keep stable local ids across
mutations: pruning removes ids without renumbering the survivors, and the
context and noun-chunk nodes are appended after the KG-derived ones.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .embeddings import EmbeddingProvider
from .errors import DataError, GraphError
from .kg import EntityMatch, KnowledgeGraph


class NodeKind(enum.Enum):
    CONTEXT = "context"
    QUESTION_ENTITY = "question_entity"
    ANSWER_ENTITY = "answer_entity"
    EXTRA = "extra"
    NOUN_CHUNK = "noun_chunk"


KG_DERIVED_KINDS = (NodeKind.QUESTION_ENTITY, NodeKind.ANSWER_ENTITY, NodeKind.EXTRA)

# Relation ids used by working graphs start at the KG's relation count.
# Offsets: context<->entity edges, chunk->graph edges (with inverse), and the
# symmetric chunk<->chunk relation which is its own inverse.
REL_CONTEXT = 0
REL_CONTEXT_INV = 1
REL_CHUNK_GRAPH = 2
REL_CHUNK_GRAPH_INV = 3
REL_CHUNK_CHUNK = 4
NUM_SPECIAL_RELATIONS = 5

SPECIAL_RELATION_NAMES = [
    "context",
    "context_inv",
    "chunk_graph",
    "chunk_graph_inv",
    "chunk_chunk",
]


@dataclass(frozen=True)
class WgNode:
    kind: NodeKind
    label: str
    kg_id: int | None


@dataclass
class WorkingGraph:
    """Typed multigraph for one answer option.

    ``features`` maps local id -> provider vector, ``relevance`` maps local
    id -> importance score in (0, 1) for KG-derived nodes. ``augmented`` is
    set once chunk nodes have been added; a second augmentation is an error.
    """

    num_kg_relations: int
    option_index: int = 0
    nodes: dict[int, WgNode] = field(default_factory=dict)
    edges: list[tuple[int, int, int]] = field(default_factory=list)
    features: dict[int, np.ndarray] = field(default_factory=dict)
    relevance: dict[int, float] = field(default_factory=dict)
    augmented: bool = False
    _next_id: int = 0

    def add_node(self, kind: NodeKind, label: str, kg_id: int | None = None) -> int:
        local_id = self._next_id
        self.nodes[local_id] = WgNode(kind, label, kg_id)
        self._next_id += 1
        return local_id

    def special_rel(self, offset: int) -> int:
        return self.num_kg_relations + offset

    @property
    def num_relations(self) -> int:
        """Relation-id space size: KG relations plus the WG-specific ones."""
        return self.num_kg_relations + NUM_SPECIAL_RELATIONS

    def relation_name(self, rel_id: int, kg: KnowledgeGraph | None = None) -> str:
        if rel_id < self.num_kg_relations:
            return kg.relation_names[rel_id] if kg is not None else f"kg_rel_{rel_id}"
        return SPECIAL_RELATION_NAMES[rel_id - self.num_kg_relations]

    def context_id(self) -> int | None:
        for local_id, node in self.nodes.items():
            if node.kind is NodeKind.CONTEXT:
                return local_id
        return None

    def ids_of_kind(self, kind: NodeKind) -> list[int]:
        return sorted(i for i, n in self.nodes.items() if n.kind is kind)

    def kg_node_ids(self) -> list[int]:
        return sorted(i for i, n in self.nodes.items() if n.kind in KG_DERIVED_KINDS)

    def kind_counts(self) -> dict[NodeKind, int]:
        counts = {kind: 0 for kind in NodeKind}
        for node in self.nodes.values():
            counts[node.kind] += 1
        return counts

    def degree(self, local_id: int) -> int:
        return sum(1 for s, _, t in self.edges if s == local_id or t == local_id)

    def copy(self) -> "WorkingGraph":
        return WorkingGraph(
            num_kg_relations=self.num_kg_relations,
            option_index=self.option_index,
            nodes=dict(self.nodes),
            edges=list(self.edges),
            features=dict(self.features),
            relevance=dict(self.relevance),
            augmented=self.augmented,
            _next_id=self._next_id,
        )

    def remove_nodes(self, doomed: set[int]) -> None:
        """Drop nodes and every incident edge. Surviving ids are unchanged."""
        for local_id in doomed:
            self.nodes.pop(local_id, None)
            self.features.pop(local_id, None)
            self.relevance.pop(local_id, None)
        self.edges = [e for e in self.edges if e[0] not in doomed and e[2] not in doomed]

    def to_json_obj(self, stage: str | None = None) -> dict:
        obj = {
            "option_index": self.option_index,
            "num_kg_relations": self.num_kg_relations,
            "nodes": [
                {"id": i, "kind": n.kind.value, "label": n.label, "kg_id": n.kg_id}
                for i, n in sorted(self.nodes.items())
            ],
            "edges": [list(e) for e in self.edges],
        }
        if stage is not None:
            obj["stage"] = stage
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "WorkingGraph":
        try:
            wg = cls(
                num_kg_relations=int(obj.get("num_kg_relations", 0)),
                option_index=int(obj["option_index"]),
            )
            max_id = -1
            for rec in obj["nodes"]:
                local_id = int(rec["id"])
                kg_id = rec.get("kg_id")
                wg.nodes[local_id] = WgNode(
                    NodeKind(rec["kind"]), rec["label"], None if kg_id is None else int(kg_id)
                )
                max_id = max(max_id, local_id)
            wg._next_id = max_id + 1
            wg.edges = [(int(s), int(r), int(t)) for s, r, t in obj["edges"]]
            wg.augmented = any(n.kind is NodeKind.NOUN_CHUNK for n in wg.nodes.values())
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"invalid working-graph record: {exc}") from exc
        for s, _, t in wg.edges:
            if s not in wg.nodes or t not in wg.nodes:
                raise DataError(f"working-graph edge references missing node: {(s, t)}")
        return wg


def graphs_identical(a: WorkingGraph, b: WorkingGraph) -> bool:
    """True when two graphs agree on ids, nodes, edges, features and scores."""
    if a.nodes != b.nodes or sorted(a.edges) != sorted(b.edges):
        return False
    if a.option_index != b.option_index or a.num_kg_relations != b.num_kg_relations:
        return False
    if set(a.features) != set(b.features) or set(a.relevance) != set(b.relevance):
        return False
    if any(not np.array_equal(a.features[i], b.features[i]) for i in a.features):
        return False
    return all(a.relevance[i] == b.relevance[i] for i in a.relevance)


def extract_subgraph(
    kg: KnowledgeGraph,
    q_matches: list[EntityMatch],
    a_matches: list[EntityMatch],
    option_index: int = 0,
) -> WorkingGraph:
    """Pull the per-option subgraph out of the KG (context node not yet added).

    Nodes are the matched question entities, the matched answer entities, and
    every other KG node sitting on a directed path of length <= 2 from a
    question entity to an answer entity (with inverse edges materialized this
    covers both orientations). Edges are all KG edges among the chosen nodes.
    A concept matched on both sides is kept once, as a question entity.
    """
    q_ids = sorted({m.concept_id for m in q_matches})
    a_ids = sorted({m.concept_id for m in a_matches if m.concept_id not in set(q_ids)})
    chosen = set(q_ids) | set(a_ids)

    a_set = set(a_ids)
    extras: set[int] = set()
    for q in q_ids:
        for _, mid in kg.neighbors(q):
            if mid in chosen or mid in extras:
                continue
            if any(dst in a_set for _, dst in kg.neighbors(mid)):
                extras.add(mid)

    wg = WorkingGraph(num_kg_relations=kg.num_relations, option_index=option_index)
    for node_id in q_ids:
        wg.add_node(NodeKind.QUESTION_ENTITY, kg.label(node_id), node_id)
    for node_id in a_ids:
        wg.add_node(NodeKind.ANSWER_ENTITY, kg.label(node_id), node_id)
    for node_id in sorted(extras):
        wg.add_node(NodeKind.EXTRA, kg.label(node_id), node_id)

    local_of = {n.kg_id: i for i, n in wg.nodes.items()}
    keep = set(local_of)
    for src, rel, dst in kg.edges:
        if src in keep and dst in keep:
            wg.edges.append((local_of[src], rel, local_of[dst]))
    return wg


def build_working_graph(sub: WorkingGraph, question: str, option: str) -> WorkingGraph:
    """Attach the QA-context node and its bidirectional edges to every node.

    The context node is labeled with the concatenated question/option text;
    calling this on a graph that already has a context node is an error.
    """
    if sub.context_id() is not None:
        raise GraphError("working graph already has a context node")
    wg = sub.copy()
    pair_text = pair_context_text(question, option)
    context = wg.add_node(NodeKind.CONTEXT, pair_text, None)
    for local_id in sorted(sub.nodes):
        wg.edges.append((context, wg.special_rel(REL_CONTEXT), local_id))
        wg.edges.append((local_id, wg.special_rel(REL_CONTEXT_INV), context))
    return wg


def pair_context_text(question: str, option: str) -> str:
    """The [question; option] text every context-dependent encoder sees."""
    return f"{question} {option}"


def init_node_features(wg: WorkingGraph, provider: EmbeddingProvider) -> WorkingGraph:
    """Populate feature vectors: context from the pair text, others from labels.

    Noun-chunk nodes (present only if features are re-initialized after
    augmentation) get the mean of their sub-token vectors, the same rule the
    augmentation step applies.
    """
    if wg.features:
        have = next(iter(wg.features.values())).shape[0]
        if have != provider.dim:
            raise GraphError(f"provider dim {provider.dim} != existing feature dim {have}")
    out = wg.copy()
    for local_id, node in sorted(out.nodes.items()):
        try:
            if node.kind is NodeKind.NOUN_CHUNK:
                _, vectors = provider.subtoken_vectors(node.label)
                vec = np.mean(vectors, axis=0)
            else:
                vec = provider.encode(node.label)
        except DataError as exc:
            raise DataError(f"node {local_id} ({node.label!r}): {exc}") from exc
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (provider.dim,):
            raise GraphError(
                f"provider returned shape {vec.shape} for node {local_id}, "
                f"expected ({provider.dim},)"
            )
        out.features[local_id] = vec
    return out


def write_wg_jsonl(path, graphs_with_stages: list[tuple[str, WorkingGraph]]) -> None:
    """Serialize stage-tagged graphs, one JSON object per line (atomic write)."""
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        for stage, wg in graphs_with_stages:
            fh.write(json.dumps(wg.to_json_obj(stage=stage)) + "\n")
    os.replace(tmp, path)


def read_wg_jsonl(path) -> list[tuple[str, WorkingGraph]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
            out.append((obj.get("stage", "raw"), WorkingGraph.from_json_obj(obj)))
    return out
