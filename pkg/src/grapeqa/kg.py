"""Knowledge-graph store: loading, validation, indexing and entity linking.

The on-disk format is JSONL with one object per line. Two line forms are
accepted:

    {"subj": "dog", "rel": "IsA", "obj": "animal"}   # a typed edge
    {"node": "dog"}                                  # an explicit node declaration

Node declarations are optional. When a file contains at least one declaration,
every edge endpoint must be declared (or ``auto_create_nodes`` must be set);
a pure-triple file declares its nodes implicitly by first appearance. For
every loaded relation an inverse relation is materialized (name suffixed with
``_inv``, id paired so that ``rel_id ^ 1`` is the inverse), and for every edge
(s, r, t) the reversed edge (t, r_inv, s) is stored as well.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError

INVERSE_SUFFIX = "_inv"

_TOKEN_RE = re.compile(r"\w+")

MATCH_SOURCE_QUESTION = "question"
MATCH_SOURCE_ANSWER = "answer"

# Longest label n-gram considered during linking.
MAX_MATCH_TOKENS = 4


def tokenize_spans(text: str) -> list[tuple[str, int, int]]:
    """Split ``text`` into lowercased word tokens with character spans.

    Tokens are maximal ``\\w+`` runs, so punctuation is stripped and any
    amount of whitespace collapses. This is the single normalization rule
    used for both node labels and query text.
    """
    return [(m.group(0).lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def normalize(text: str) -> str:
    """Canonical form of a text: lowercased word tokens joined by one space."""
    return " ".join(tok for tok, _, _ in tokenize_spans(text))


@dataclass(frozen=True)
class EntityMatch:
    """A span of source text matched to a KG concept."""

    concept_id: int
    start: int
    end: int
    source: str  # MATCH_SOURCE_QUESTION or MATCH_SOURCE_ANSWER


class KnowledgeGraph:
    """Immutable store of labeled concept nodes and typed directed edges.

    Safe for concurrent reads once constructed; construct via ``load_kg`` or
    ``from_triples``.
    """

    def __init__(
        self,
        labels: list[str],
        relation_names: list[str],
        edges: list[tuple[int, int, int]],
    ):
        self.labels = labels
        self.relation_names = relation_names
        self.edges = edges
        self._label_to_id = {label: i for i, label in enumerate(labels)}
        self._norm_to_id: dict[str, int] = {}
        self._max_label_tokens = 0
        for i, label in enumerate(labels):
            norm = normalize(label)
            if norm and norm not in self._norm_to_id:
                self._norm_to_id[norm] = i
                self._max_label_tokens = max(self._max_label_tokens, norm.count(" ") + 1)
        self._edge_set = set(edges)
        self._adjacency: dict[int, list[tuple[int, int]]] = {}
        for src, rel, dst in edges:
            self._adjacency.setdefault(src, []).append((rel, dst))

    @property
    def num_nodes(self) -> int:
        return len(self.labels)

    @property
    def num_relations(self) -> int:
        """Total relation count including materialized inverses."""
        return len(self.relation_names)

    @property
    def num_declared_relations(self) -> int:
        return len(self.relation_names) // 2

    def label(self, node_id: int) -> str:
        return self.labels[node_id]

    def node_id(self, label: str) -> int | None:
        return self._label_to_id.get(label)

    def has_edge(self, src: int, rel: int, dst: int) -> bool:
        return (src, rel, dst) in self._edge_set

    def neighbors(self, node_id: int) -> list[tuple[int, int]]:
        """Outgoing (relation-id, target-id) pairs; inverses make this symmetric."""
        return self._adjacency.get(node_id, [])

    @staticmethod
    def inverse_relation(rel_id: int) -> int:
        return rel_id ^ 1


def from_triples(
    triples: list[tuple[str, str, str]],
    declared_nodes: list[str] | None = None,
    auto_create_nodes: bool = False,
) -> KnowledgeGraph:
    """Build a validated graph from (subj, rel, obj) string triples.

    Ids are assigned densely by first appearance. ``declared_nodes`` switches
    on strict mode: edge endpoints outside the declared set are rejected
    unless ``auto_create_nodes`` is set.
    """
    labels: list[str] = []
    label_ids: dict[str, int] = {}
    strict = declared_nodes is not None and len(declared_nodes) > 0

    def intern_node(label: str, declared: bool) -> int:
        if not isinstance(label, str) or not label.strip():
            raise DataError(f"empty or non-string node label: {label!r}")
        existing = label_ids.get(label)
        if existing is not None:
            return existing
        if strict and not declared and not auto_create_nodes:
            raise DataError(
                f"edge references undeclared node label {label!r} "
                "(pass auto_create_nodes to create it)"
            )
        label_ids[label] = len(labels)
        labels.append(label)
        return label_ids[label]

    for label in declared_nodes or []:
        intern_node(label, declared=True)

    relation_names: list[str] = []
    relation_ids: dict[str, int] = {}

    def intern_relation(name: str) -> int:
        if not isinstance(name, str) or not name.strip():
            raise DataError(f"empty or non-string relation name: {name!r}")
        existing = relation_ids.get(name)
        if existing is not None:
            return existing
        rel_id = len(relation_names)
        relation_ids[name] = rel_id
        relation_names.append(name)
        relation_names.append(name + INVERSE_SUFFIX)
        return rel_id

    edges: list[tuple[int, int, int]] = []
    seen: set[tuple[int, int, int]] = set()
    for subj, rel, obj in triples:
        s = intern_node(subj, declared=False)
        r = intern_relation(rel)
        t = intern_node(obj, declared=False)
        triple = (s, r, t)
        if triple in seen:
            raise DataError(f"duplicate triple ({subj!r}, {rel!r}, {obj!r})")
        seen.add(triple)
        edges.append(triple)
        edges.append((t, r ^ 1, s))
    return KnowledgeGraph(labels, relation_names, edges)


def load_kg(path: str | Path, auto_create_nodes: bool = False) -> KnowledgeGraph:
    """Load and validate a knowledge graph from a JSONL file.

    Deterministic: identical files yield identical id assignments and edge
    order. Raises ``DataError`` with the offending line number on malformed
    input.
    """
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read KG file {path}: {exc}") from exc

    declared: list[str] = []
    triples: list[tuple[str, str, str]] = []
    order: list[tuple[str, object]] = []  # preserves first-appearance interning order
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise DataError(f"{path}:{lineno}: expected an object")
        if "node" in obj:
            if not isinstance(obj["node"], str):
                raise DataError(f"{path}:{lineno}: 'node' must be a string")
            order.append(("node", obj["node"]))
        elif {"subj", "rel", "obj"} <= obj.keys():
            order.append(("edge", (obj["subj"], obj["rel"], obj["obj"])))
        else:
            raise DataError(
                f"{path}:{lineno}: line must have keys subj/rel/obj or node, got {sorted(obj)}"
            )

    for kind, payload in order:
        if kind == "node":
            declared.append(payload)  # type: ignore[arg-type]
        else:
            triples.append(payload)  # type: ignore[arg-type]
    try:
        return from_triples(triples, declared_nodes=declared, auto_create_nodes=auto_create_nodes)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from exc


def link_entities(
    text: str, kg: KnowledgeGraph, source: str = MATCH_SOURCE_QUESTION
) -> list[EntityMatch]:
    """Match KG node labels against ``text`` as normalized token n-grams.

    Matching is leftmost-longest: at each token position the longest label
    n-gram (up to MAX_MATCH_TOKENS tokens) wins and shorter or overlapping
    candidates to its right are skipped, so the returned spans never overlap
    and nested labels resolve to the maximal one. Case and whitespace do not
    affect the result. Empty text yields an empty list.
    """
    tokens = tokenize_spans(text)
    if not tokens:
        return []
    max_n = min(MAX_MATCH_TOKENS, kg._max_label_tokens)
    matches: list[EntityMatch] = []
    i = 0
    while i < len(tokens):
        found = None
        for n in range(min(max_n, len(tokens) - i), 0, -1):
            gram = " ".join(tok for tok, _, _ in tokens[i : i + n])
            concept = kg._norm_to_id.get(gram)
            if concept is not None:
                found = (concept, tokens[i][1], tokens[i + n - 1][2], n)
                break
        if found is None:
            i += 1
        else:
            concept, start, end, n = found
            matches.append(EntityMatch(concept, start, end, source))
            i += n
    return matches
