"""Text-to-vector providers used to initialize node features.

Two implementations are shipped: a seeded deterministic provider that needs
no external data (every whitespace token is hashed to a fixed random vector)
and a file-backed provider that serves vectors exported by an offline
language-model run.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import DataError


class EmbeddingProvider:
    """Interface: map text to a fixed-dimension vector.

    ``subtoken_vectors`` additionally exposes the provider's own tokenization
    so that multi-word texts (noun chunks) can be represented by averaging
    sub-token embeddings.
    """

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def encode(self, text: str) -> np.ndarray:
        """Return a vector of shape (dim,) for ``text``."""
        raise NotImplementedError

    def subtoken_vectors(self, text: str) -> tuple[list[str], np.ndarray]:
        """Return (sub-tokens, matrix of shape (n_subtokens, dim)) for ``text``."""
        raise NotImplementedError


class DeterministicProvider(EmbeddingProvider):
    """Self-contained seeded provider.

    Each whitespace token counts as one sub-token and is mapped to a unit-scale
    normal vector drawn from an RNG keyed by sha256(seed, token), so the output
    is bit-identical across runs and platforms. A text embeds as the mean of
    its token vectors; empty text embeds as the zero vector.
    """

    def __init__(self, dim: int = 64, seed: int = 0):
        if dim <= 0:
            raise ValueError(f"provider dim must be positive, got {dim}")
        self._dim = dim
        self._seed = seed
        self._token_cache: dict[str, np.ndarray] = {}

    @property
    def dim(self) -> int:
        return self._dim

    def _token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            digest = hashlib.sha256(f"{self._seed}\x00{token}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
            vec = rng.standard_normal(self._dim) / np.sqrt(self._dim)
            vec.flags.writeable = False
            self._token_cache[token] = vec
        return vec

    def encode(self, text: str) -> np.ndarray:
        tokens = text.lower().split()
        if not tokens:
            return np.zeros(self._dim)
        return np.mean([self._token_vector(t) for t in tokens], axis=0)

    def subtoken_vectors(self, text: str) -> tuple[list[str], np.ndarray]:
        tokens = text.lower().split()
        if not tokens:
            return [], np.zeros((0, self._dim))
        return tokens, np.stack([self._token_vector(t) for t in tokens])


class FileEmbeddingProvider(EmbeddingProvider):
    """Serves vectors from a JSONL file of embedding records.

    Record schema: {"key": str, "vector": [float, ...], "subtokens": [str, ...]}.
    Keys must be unique, vectors finite and of one constant dimension.
    Non-fatal oddities found while loading are collected in ``warnings``.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.warnings: list[str] = []
        self._records: dict[str, dict] = {}
        self._load()

    def _load(self) -> None:
        dim = None
        try:
            lines = self.path.read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise DataError(f"cannot read embeddings file {self.path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{self.path}:{lineno}: malformed JSON: {exc}") from exc
            if not isinstance(obj, dict) or "key" not in obj or "vector" not in obj:
                raise DataError(f"{self.path}:{lineno}: record must have 'key' and 'vector'")
            key = obj["key"]
            if key in self._records:
                raise DataError(f"{self.path}:{lineno}: duplicate key {key!r}")
            vector = np.asarray(obj["vector"], dtype=float)
            if vector.ndim != 1 or vector.size == 0:
                raise DataError(f"{self.path}:{lineno}: vector must be a non-empty flat list")
            if not np.all(np.isfinite(vector)):
                raise DataError(f"{self.path}:{lineno}: vector for {key!r} has non-finite entries")
            if dim is None:
                dim = vector.size
            elif vector.size != dim:
                raise DataError(
                    f"{self.path}:{lineno}: vector dim {vector.size} != file dim {dim}"
                )
            subtokens = obj.get("subtokens", [])
            if not isinstance(subtokens, list) or not all(isinstance(s, str) for s in subtokens):
                raise DataError(f"{self.path}:{lineno}: subtokens must be a list of strings")
            if not subtokens:
                self.warnings.append(f"{self.path}:{lineno}: record {key!r} has no subtokens")
            vector.flags.writeable = False
            self._records[key] = {"vector": vector, "subtokens": subtokens}
        if dim is None:
            raise DataError(f"{self.path}: embeddings file is empty")
        self._dim = dim

    @property
    def dim(self) -> int:
        return self._dim

    def keys(self) -> list[str]:
        return list(self._records)

    def encode(self, text: str) -> np.ndarray:
        rec = self._records.get(text)
        if rec is None:
            raise DataError(f"embeddings file {self.path} has no record for key {text!r}")
        return rec["vector"]

    def subtoken_vectors(self, text: str) -> tuple[list[str], np.ndarray]:
        rec = self._records.get(text)
        if rec is None:
            raise DataError(f"embeddings file {self.path} has no record for key {text!r}")
        subtokens = rec["subtokens"]
        if not subtokens:
            raise DataError(f"record {text!r} in {self.path} lists no subtokens")
        vectors = []
        for tok in subtokens:
            tok_rec = self._records.get(tok)
            if tok_rec is None:
                raise DataError(
                    f"embeddings file {self.path} misses sub-token record {tok!r} of {text!r}"
                )
            vectors.append(tok_rec["vector"])
        return list(subtokens), np.stack(vectors)
