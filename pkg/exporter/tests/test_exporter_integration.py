"""Integration against the consumer: its loaders must accept exporter output.

This is the exporter's acceptance surface: the embeddings file loads into the
engine's file-backed provider with zero warnings, the chunk file loads into
its external chunker with zero warnings, and the chunk features the engine
computes equal the exported pooled vectors to 1e-6.
"""

import json

import numpy as np
import pytest

from grapeqa import (
    DeterministicProvider,
    ExternalChunker,
    FileEmbeddingProvider,
    NodeKind,
    RelevanceScorer,
    load_kg,
    score_option,
)
from grapeqa.gnn import GnnModel
from grapeqa.pipeline import PipelineConfig, build_option_graph
from grapeqa.training import load_dataset

from lmexport import export_features


@pytest.fixture(scope="module")
def exported(tiny_model_dir, tiny_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("export_integration")
    return export_features(
        tiny_corpus / "dataset.jsonl", tiny_corpus / "kg.jsonl",
        str(tiny_model_dir), out, chunker_kind="pattern",
    )


def verdict(name, ok, detail=""):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}"
    if detail:
        line += f" ({detail})"
    print(line)
    assert ok, line


def test_embeddings_pass_core_schema_validation(exported):
    provider = FileEmbeddingProvider(exported["embeddings"])
    verdict(
        "exporter embeddings schema",
        provider.warnings == [] and provider.dim == 16,
        f"dim {provider.dim}, warnings {provider.warnings}",
    )


def test_chunk_file_loads_with_zero_warnings(exported):
    chunker = ExternalChunker(exported["chunks"])
    verdict("exporter chunk file schema", chunker.warnings == [], str(chunker.warnings))


def test_core_recomputes_chunk_vectors_to_1e6(exported, tiny_corpus):
    provider = FileEmbeddingProvider(exported["embeddings"])
    records = {
        json.loads(line)["key"]: np.asarray(json.loads(line)["vector"])
        for line in exported["embeddings"].read_text().splitlines()
    }
    worst = 0.0
    checked = 0
    for line in exported["chunks"].read_text().splitlines():
        for chunk in json.loads(line)["chunks"]:
            _, vectors = provider.subtoken_vectors(chunk["text"])
            recomputed = vectors.mean(axis=0)
            worst = max(worst, float(np.max(np.abs(recomputed - records[chunk["text"]]))))
            checked += 1
    verdict(
        "chunk vectors equal sub-token means",
        checked > 0 and worst <= 1e-6,
        f"{checked} chunks, max dev {worst:.2e}",
    )


def test_full_pipeline_runs_on_exported_features(exported, tiny_corpus):
    kg = load_kg(tiny_corpus / "kg.jsonl")
    examples = load_dataset(tiny_corpus / "dataset.jsonl")
    provider = FileEmbeddingProvider(exported["embeddings"])
    scorer = RelevanceScorer.seeded(DeterministicProvider(dim=32, seed=0), seed=0)
    chunker = ExternalChunker(exported["chunks"])
    config = PipelineConfig(pega=True, chunker=chunker)
    model = GnnModel(
        input_dim=provider.dim, num_graph_relations=kg.num_relations + 5,
        dim=8, layers=2, seed=0, dtype=np.float64,
    )
    records = {
        json.loads(line)["key"]: np.asarray(json.loads(line)["vector"])
        for line in exported["embeddings"].read_text().splitlines()
    }
    scored = 0
    for example in examples:
        for idx, option in enumerate(example.options):
            wg = build_option_graph(
                kg, provider, scorer, example.question, option, config,
                example_id=example.id, option_index=idx,
            ).final
            for node_id in wg.ids_of_kind(NodeKind.NOUN_CHUNK):
                np.testing.assert_allclose(
                    wg.features[node_id], records[wg.nodes[node_id].label], atol=1e-6
                )
            assert np.isfinite(float(score_option(model, wg).data))
            scored += 1
    verdict("pipeline on exported features", scored == 6, f"{scored} option graphs scored")
