"""Graph augmentation with noun chunks extracted from the QA pair.

Three chunkers are available: a rule-based one matching determiner/adjective/
noun runs against a POS lexicon, a random-words baseline, and an external one
replaying chunk files produced offline. Extracted chunks become new nodes
wired to each other and to every pre-existing node.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingProvider
from .errors import DataError, GraphError
from .kg import MATCH_SOURCE_ANSWER, MATCH_SOURCE_QUESTION, normalize, tokenize_spans
from .working_graph import (
    REL_CHUNK_CHUNK,
    REL_CHUNK_GRAPH,
    REL_CHUNK_GRAPH_INV,
    NodeKind,
    WorkingGraph,
    pair_context_text,
)

POS_DET = "DET"
POS_ADJ = "ADJ"
POS_NOUN = "NOUN"
POS_OTHER = "OTHER"

# Closed-class defaults so tiny lexicons do not need to spell out articles.
_DEFAULT_DETERMINERS = {"the", "a", "an"}


@dataclass(frozen=True)
class NounChunk:
    """A chunk of the QA pair; offsets index into the concatenated pair text."""

    text: str
    start: int
    end: int
    source: str  # question / answer

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("chunk text must be non-empty")


def load_pos_lexicon(path: str | Path) -> dict[str, str]:
    """Read a JSONL lexicon of {"token", "pos"} records, pos in DET/ADJ/NOUN/OTHER."""
    path = Path(path)
    lexicon: dict[str, str] = {}
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read POS lexicon {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            token, pos = obj["token"], obj["pos"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: malformed lexicon entry: {exc}") from exc
        if pos not in (POS_DET, POS_ADJ, POS_NOUN, POS_OTHER):
            raise DataError(f"{path}:{lineno}: unknown pos tag {pos!r}")
        lexicon[token.lower()] = pos
    return lexicon


class RuleBasedChunker:
    """Maximal determiner? adjective* noun+ runs against a POS lexicon.

    Tokens absent from the lexicon count as OTHER, except the built-in
    determiners the/a/an. Chunk text is the original substring covering the
    matched tokens.
    """

    def __init__(self, lexicon: dict[str, str]):
        self.lexicon = {k.lower(): v for k, v in lexicon.items()}

    @classmethod
    def from_file(cls, path: str | Path) -> "RuleBasedChunker":
        return cls(load_pos_lexicon(path))

    def _pos(self, token: str) -> str:
        pos = self.lexicon.get(token)
        if pos is not None:
            return pos
        return POS_DET if token in _DEFAULT_DETERMINERS else POS_OTHER

    def _chunk_one(self, text: str, offset: int, source: str) -> list[NounChunk]:
        tokens = tokenize_spans(text)
        chunks: list[NounChunk] = []
        i = 0
        while i < len(tokens):
            j = i
            if j < len(tokens) and self._pos(tokens[j][0]) == POS_DET:
                j += 1
            while j < len(tokens) and self._pos(tokens[j][0]) == POS_ADJ:
                j += 1
            noun_start = j
            while j < len(tokens) and self._pos(tokens[j][0]) == POS_NOUN:
                j += 1
            if j > noun_start:  # at least one noun: emit the whole run
                start, end = tokens[i][1], tokens[j - 1][2]
                chunks.append(NounChunk(text[start:end], offset + start, offset + end, source))
                i = j
            else:
                i += 1
        return chunks

    def extract(self, question: str, option: str, **_: object) -> list[NounChunk]:
        out = self._chunk_one(question, 0, MATCH_SOURCE_QUESTION)
        out += self._chunk_one(option, len(question) + 1, MATCH_SOURCE_ANSWER)
        return out


class RandomWordsChunker:
    """Baseline: sample ceil(fraction * word count) distinct words as chunks.

    Sampling is seeded and without replacement over the distinct normalized
    words of the pair, so the chunk count is exact whenever the words are
    distinct and never exceeds the distinct-word count.
    """

    def __init__(self, fraction: float, seed: int = 0):
        if not 0.0 < fraction <= 1.0:
            raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
        self.fraction = fraction
        self.seed = seed

    def extract(self, question: str, option: str, **_: object) -> list[NounChunk]:
        words: list[tuple[str, int, int, str]] = []
        for tok, start, end in tokenize_spans(question):
            words.append((tok, start, end, MATCH_SOURCE_QUESTION))
        shift = len(question) + 1
        for tok, start, end in tokenize_spans(option):
            words.append((tok, start + shift, end + shift, MATCH_SOURCE_ANSWER))
        if not words:
            return []
        distinct: dict[str, tuple[str, int, int, str]] = {}
        for word in words:
            distinct.setdefault(word[0], word)
        count = min(math.ceil(self.fraction * len(words)), len(distinct))
        rng = np.random.default_rng(self.seed)
        keys = list(distinct)
        picked = sorted(rng.choice(len(keys), size=count, replace=False).tolist())
        pair = pair_context_text(question, option)
        chunks = []
        for idx in picked:
            tok, start, end, source = distinct[keys[idx]]
            chunks.append(NounChunk(pair[start:end], start, end, source))
        return sorted(chunks, key=lambda c: c.start)


class ExternalChunker:
    """Replays chunks from a JSONL file keyed by (example_id, option_idx).

    Line schema: {"example_id", "option_idx", "chunks": [{"text", "start",
    "end"}]}. Asking for an example the file does not cover is an error.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.warnings: list[str] = []
        self._by_key: dict[tuple[str, int], list[dict]] = {}
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DataError(f"cannot read chunk file {self.path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                key = (str(obj["example_id"]), int(obj["option_idx"]))
                chunks = obj["chunks"]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{self.path}:{lineno}: malformed chunk record: {exc}") from exc
            if key in self._by_key:
                raise DataError(
                    f"{self.path}:{lineno}: duplicate chunk record for example "
                    f"{key[0]!r} option {key[1]}"
                )
            if not isinstance(chunks, list):
                raise DataError(f"{self.path}:{lineno}: 'chunks' must be a list")
            self._by_key[key] = chunks

    def extract(
        self,
        question: str,
        option: str,
        example_id: str | None = None,
        option_idx: int = 0,
        **_: object,
    ) -> list[NounChunk]:
        if example_id is None:
            raise ValueError("external chunker needs the example id")
        records = self._by_key.get((str(example_id), option_idx))
        if records is None:
            raise DataError(
                f"chunk file {self.path} has no entry for example {example_id!r} "
                f"option {option_idx}"
            )
        boundary = len(question)
        chunks = []
        for rec in records:
            try:
                text, start, end = rec["text"], int(rec["start"]), int(rec["end"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(
                    f"chunk file {self.path}: bad chunk for example {example_id!r}: {exc}"
                ) from exc
            source = MATCH_SOURCE_QUESTION if end <= boundary else MATCH_SOURCE_ANSWER
            chunks.append(NounChunk(text, start, end, source))
        return chunks


Chunker = RuleBasedChunker | RandomWordsChunker | ExternalChunker


def extract_chunks(
    chunker: Chunker,
    question: str,
    option: str,
    example_id: str | None = None,
    option_idx: int = 0,
) -> list[NounChunk]:
    """Run a chunker on the QA pair and deduplicate by normalized text."""
    if not question.strip():
        raise ValueError("question must be non-empty")
    raw = chunker.extract(question, option, example_id=example_id, option_idx=option_idx)
    seen: set[str] = set()
    unique = []
    for chunk in raw:
        key = normalize(chunk.text)
        if key and key not in seen:
            seen.add(key)
            unique.append(chunk)
    return unique


def chunk_feature(provider: EmbeddingProvider, text: str) -> np.ndarray:
    """Chunk node feature: arithmetic mean of the provider's sub-token vectors."""
    _, vectors = provider.subtoken_vectors(text)
    if vectors.shape[0] == 0:
        raise GraphError(f"chunk {text!r} produced no sub-tokens")
    return np.mean(vectors, axis=0)


def augment(
    wg: WorkingGraph, chunks: list[NounChunk], provider: EmbeddingProvider
) -> WorkingGraph:
    """Add one node per chunk plus the chunk-chunk and chunk-graph edges.

    Every ordered pair of distinct chunk nodes gets a symmetric chunk-chunk
    edge; every (chunk, pre-existing node) pair gets a chunk-graph edge in
    both directions, the context node included. Graph growth is therefore
    exactly |chunks| nodes and |chunks|*(|chunks|-1) + 2*|chunks|*|V| edges.
    """
    if wg.augmented:
        raise GraphError("working graph was already augmented with chunks")
    if wg.context_id() is None:
        raise GraphError("augment requires a context node")
    if not wg.features:
        raise GraphError("augment requires initialized node features")
    out = wg.copy()
    out.augmented = True
    if not chunks:
        return out

    old_ids = sorted(wg.nodes)
    seen: set[str] = set()
    chunk_ids: list[int] = []
    for chunk in chunks:
        key = normalize(chunk.text)
        if not key or key in seen:
            continue
        seen.add(key)
        local_id = out.add_node(NodeKind.NOUN_CHUNK, chunk.text, None)
        out.features[local_id] = chunk_feature(provider, chunk.text)
        chunk_ids.append(local_id)

    rel_cc = out.special_rel(REL_CHUNK_CHUNK)
    rel_co = out.special_rel(REL_CHUNK_GRAPH)
    rel_oc = out.special_rel(REL_CHUNK_GRAPH_INV)
    for ci in chunk_ids:
        for cj in chunk_ids:
            if ci != cj:
                out.edges.append((ci, rel_cc, cj))
    for ci in chunk_ids:
        for old in old_ids:
            out.edges.append((ci, rel_co, old))
            out.edges.append((old, rel_oc, ci))
    return out
