"""Run a local pretrained transformer over a QA corpus and emit feature files.

Outputs two JSONL files the downstream engine consumes directly:

  embeddings.jsonl  {"key", "vector", "subtokens"} records for every QA-context
                    text, every KG node label, every extracted chunk and every
                    chunk sub-token
  chunks.jsonl      {"example_id", "option_idx", "chunks": [{"text", "start",
                    "end"}]} with offsets into the concatenated pair text

Sub-token vectors are contextual (taken from the QA-context pass) and emitted
alongside the chunk records so the consumer, not this tool, performs the
sub-token averaging; since keys must be unique, a sub-token string seen in
several contexts keeps its first vector, and each chunk's pooled vector is
defined as the mean of the recorded sub-token vectors so both sides of the
file agree exactly. Everything runs on CPU in eval mode with a fixed torch
seed, so re-runs produce identical files.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np
import torch

from .chunkers import make_chunker
from .io import ExportError, pair_text, read_dataset, read_kg_labels

EMBEDDINGS_FILE = "embeddings.jsonl"
CHUNKS_FILE = "chunks.jsonl"


class _RecordStore:
    """Ordered key -> (vector, subtokens); first occurrence of a key wins."""

    def __init__(self) -> None:
        self.records: dict[str, tuple[np.ndarray, list[str]]] = {}

    def emit(self, key: str, vector: np.ndarray, subtokens: list[str]) -> None:
        if key and key not in self.records:
            self.records[key] = (np.asarray(vector, dtype=np.float64), list(subtokens))

    def vector(self, key: str) -> np.ndarray:
        return self.records[key][0]

    def __contains__(self, key: str) -> bool:
        return key in self.records


class Encoder:
    """Thin wrapper over a local tokenizer/model pair, CPU inference only."""

    def __init__(self, model_name_or_path: str, max_length: int = 256):
        from transformers import AutoModel, AutoTokenizer

        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_name_or_path)
            self.model = AutoModel.from_pretrained(model_name_or_path)
        except Exception as exc:
            raise ExportError(
                f"cannot load model {model_name_or_path!r}: {exc}"
            ) from exc
        if not self.tokenizer.is_fast:
            raise ExportError("a fast tokenizer is required for offset mapping")
        torch.manual_seed(0)
        self.model.eval()
        self.model.to("cpu")
        self.max_length = max_length

    def encode(self, text: str):
        """Returns (token strings, offsets, hidden states) for real tokens only."""
        enc = self.tokenizer(
            text,
            return_offsets_mapping=True,
            return_special_tokens_mask=True,
            truncation=True,
            max_length=self.max_length,
            return_tensors="pt",
        )
        with torch.no_grad():
            hidden = self.model(
                input_ids=enc["input_ids"], attention_mask=enc["attention_mask"]
            ).last_hidden_state[0]
        keep = enc["special_tokens_mask"][0] == 0
        tokens = [
            tok
            for tok, real in zip(
                self.tokenizer.convert_ids_to_tokens(enc["input_ids"][0]), keep
            )
            if real
        ]
        offsets = enc["offset_mapping"][0][keep].tolist()
        states = hidden[keep].numpy().astype(np.float64)
        if not tokens:
            raise ExportError(f"text tokenized to nothing: {text!r}")
        return tokens, offsets, states


def export_features(
    data_path: str | Path,
    kg_path: str | Path,
    model_name_or_path: str,
    out_dir: str | Path,
    chunker_kind: str = "auto",
    max_length: int = 256,
) -> dict[str, Path]:
    """Produce embeddings.jsonl and chunks.jsonl under ``out_dir``.

    Writes are atomic and any partially written temporary files are removed
    on failure.
    """
    examples = read_dataset(data_path)
    labels = read_kg_labels(kg_path)
    encoder = Encoder(model_name_or_path, max_length=max_length)
    chunker = make_chunker(chunker_kind)

    store = _RecordStore()
    chunk_lines: list[dict] = []

    for example in examples:
        for option_idx, option in enumerate(example.options):
            pair = pair_text(example.question, option)
            tokens, offsets, states = encoder.encode(pair)
            chunks = chunker.extract(example.question, option)
            serialized = []
            for chunk in chunks:
                positions = [
                    i
                    for i, (start, end) in enumerate(offsets)
                    if start < chunk.end and chunk.start < end
                ]
                if positions:
                    subtokens = [tokens[i] for i in positions]
                    for i in positions:
                        store.emit(tokens[i], states[i], [tokens[i]])
                else:  # chunk fell beyond truncation: fall back to a solo pass
                    subtokens, _, solo = encoder.encode(chunk.text)
                    for tok, vec in zip(subtokens, solo):
                        store.emit(tok, vec, [tok])
                pooled = np.mean([store.vector(t) for t in subtokens], axis=0)
                store.emit(chunk.text, pooled, subtokens)
                serialized.append(
                    {"text": chunk.text, "start": chunk.start, "end": chunk.end}
                )
            store.emit(pair, states.mean(axis=0), tokens)
            chunk_lines.append(
                {"example_id": example.id, "option_idx": option_idx, "chunks": serialized}
            )

    for label in labels:
        if label not in store:
            tokens, _, states = encoder.encode(label)
            store.emit(label, states.mean(axis=0), tokens)

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"embeddings": out / EMBEDDINGS_FILE, "chunks": out / CHUNKS_FILE}
    tmp_paths = [Path(f"{p}.tmp.{os.getpid()}") for p in paths.values()]
    try:
        with open(tmp_paths[0], "w", encoding="utf-8") as fh:
            for key, (vector, subtokens) in store.records.items():
                fh.write(
                    json.dumps(
                        {"key": key, "vector": vector.tolist(), "subtokens": subtokens}
                    )
                    + "\n"
                )
        with open(tmp_paths[1], "w", encoding="utf-8") as fh:
            for line in chunk_lines:
                fh.write(json.dumps(line) + "\n")
        os.replace(tmp_paths[0], paths["embeddings"])
        os.replace(tmp_paths[1], paths["chunks"])
    except BaseException:
        for tmp in tmp_paths:
            tmp.unlink(missing_ok=True)
        raise
    return paths
