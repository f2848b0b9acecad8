"""Noun-chunk extraction for the export pipeline.

The default pattern chunker is self-contained: it keeps maximal runs of an
optional determiner followed by content words, using a closed stop-word list
to reject verbs, prepositions and the like. When spaCy and one of its
pipelines are installed, ``SpacyChunker`` delegates to its noun-chunk parser
instead. Offsets index into the concatenated "question option" text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

_TOKEN_RE = re.compile(r"\w+")

_DETERMINERS = {"the", "a", "an", "this", "that", "these", "those", "its", "their",
                "his", "her", "my", "your", "our", "some", "any", "each", "every"}

_STOPWORDS = {
    "am", "is", "are", "was", "were", "be", "been", "being", "do", "does", "did",
    "have", "has", "had", "can", "could", "may", "might", "must", "shall",
    "should", "will", "would", "not", "no", "nor", "and", "or", "but", "if",
    "then", "else", "than", "as", "of", "in", "on", "at", "by", "for", "with",
    "about", "against", "between", "into", "through", "during", "before",
    "after", "above", "below", "to", "from", "up", "down", "out", "off",
    "over", "under", "again", "further", "once", "here", "there", "when",
    "where", "why", "how", "what", "which", "who", "whom", "whose", "it",
    "he", "she", "they", "we", "you", "i", "me", "him", "them", "us", "so",
    "just", "very", "too", "also", "only", "most", "more", "such", "own",
    "same", "both", "all", "few", "many", "much", "while", "because", "until",
    "although", "get", "got", "use", "used", "make", "made", "like", "go",
    "went", "come", "came", "see", "saw", "say", "said", "best", "fits",
}


@dataclass(frozen=True)
class Chunk:
    text: str
    start: int
    end: int


class PatternChunker:
    """Determiner? content-word+ runs; deterministic and dependency-free."""

    def _chunk_part(self, text: str, offset: int) -> list[Chunk]:
        tokens = [(m.group(0).lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]
        chunks: list[Chunk] = []
        i = 0
        while i < len(tokens):
            j = i
            if j < len(tokens) and tokens[j][0] in _DETERMINERS:
                j += 1
            content_start = j
            while j < len(tokens) and tokens[j][0] not in _STOPWORDS \
                    and tokens[j][0] not in _DETERMINERS:
                j += 1
            if j > content_start:
                start, end = tokens[i][1], tokens[j - 1][2]
                chunks.append(Chunk(text[start:end], offset + start, offset + end))
                i = j
            else:
                i += 1
        return chunks

    def extract(self, question: str, option: str) -> list[Chunk]:
        chunks = self._chunk_part(question, 0)
        chunks += self._chunk_part(option, len(question) + 1)
        return chunks


class SpacyChunker:
    """spaCy's noun-chunk parser; requires an installed pipeline."""

    def __init__(self, model: str = "en_core_web_sm"):
        import spacy

        self.nlp = spacy.load(model)

    def _chunk_part(self, text: str, offset: int) -> list[Chunk]:
        doc = self.nlp(text)
        return [
            Chunk(c.text, offset + c.start_char, offset + c.end_char)
            for c in doc.noun_chunks
        ]

    def extract(self, question: str, option: str) -> list[Chunk]:
        chunks = self._chunk_part(question, 0)
        chunks += self._chunk_part(option, len(question) + 1)
        return chunks


def make_chunker(kind: str = "auto"):
    if kind == "pattern":
        return PatternChunker()
    if kind == "spacy":
        return SpacyChunker()
    if kind == "auto":
        try:
            return SpacyChunker()
        except Exception:
            return PatternChunker()
    raise ValueError(f"unknown chunker kind {kind!r} (use auto, spacy or pattern)")
