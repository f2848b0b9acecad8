import json

import numpy as np
import pytest

from lmexport import PatternChunker, export_features, pair_text, read_dataset
from lmexport.cli import main


def load_records(path):
    records = {}
    for line in path.read_text().splitlines():
        obj = json.loads(line)
        records[obj["key"]] = obj
    return records


class TestPatternChunker:
    def test_determiner_plus_content_runs(self):
        chunks = PatternChunker().extract("where is the dog", "the farm")
        texts = [c.text for c in chunks]
        assert texts == ["the dog", "the farm"]
        pair = pair_text("where is the dog", "the farm")
        for c in chunks:
            assert pair[c.start : c.end] == c.text

    def test_stopword_only_text_yields_nothing(self):
        assert PatternChunker().extract("is it", "was") == []


@pytest.fixture(scope="module")
def exported(tiny_model_dir, tiny_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("export")
    return export_features(
        tiny_corpus / "dataset.jsonl", tiny_corpus / "kg.jsonl",
        str(tiny_model_dir), out, chunker_kind="pattern",
    )


class TestExport:
    def test_chunk_file_covers_every_example_option(self, exported, tiny_corpus):
        examples = read_dataset(tiny_corpus / "dataset.jsonl")
        keys = set()
        for line in exported["chunks"].read_text().splitlines():
            obj = json.loads(line)
            keys.add((obj["example_id"], obj["option_idx"]))
        expected = {(e.id, i) for e in examples for i in range(len(e.options))}
        assert keys == expected

    def test_embeddings_cover_contexts_labels_chunks_and_subtokens(
        self, exported, tiny_corpus
    ):
        records = load_records(exported["embeddings"])
        examples = read_dataset(tiny_corpus / "dataset.jsonl")
        for example in examples:
            for option in example.options:
                assert pair_text(example.question, option) in records
        for label in ("dog", "animal", "farm", "kennel", "guitar pick", "music"):
            assert label in records
        for line in exported["chunks"].read_text().splitlines():
            for chunk in json.loads(line)["chunks"]:
                assert chunk["text"] in records
                for tok in records[chunk["text"]]["subtokens"]:
                    assert tok in records

    def test_constant_dimension(self, exported):
        records = load_records(exported["embeddings"])
        dims = {len(rec["vector"]) for rec in records.values()}
        assert dims == {16}

    def test_chunk_vector_equals_subtoken_mean(self, exported):
        records = load_records(exported["embeddings"])
        checked = 0
        for line in exported["chunks"].read_text().splitlines():
            for chunk in json.loads(line)["chunks"]:
                rec = records[chunk["text"]]
                mean = np.mean(
                    [np.asarray(records[t]["vector"]) for t in rec["subtokens"]], axis=0
                )
                np.testing.assert_allclose(np.asarray(rec["vector"]), mean, atol=1e-6)
                checked += 1
        assert checked > 0

    def test_rerun_is_byte_identical(self, exported, tiny_model_dir, tiny_corpus, tmp_path):
        paths = export_features(
            tiny_corpus / "dataset.jsonl", tiny_corpus / "kg.jsonl",
            str(tiny_model_dir), tmp_path / "again", chunker_kind="pattern",
        )
        assert paths["embeddings"].read_bytes() == exported["embeddings"].read_bytes()
        assert paths["chunks"].read_bytes() == exported["chunks"].read_bytes()

    def test_wordpiece_subtokens_are_contextual_records(self, exported):
        records = load_records(exported["embeddings"])
        # "dogs" splits into dog + ##s; both pieces must be recorded
        assert "##s" in records
        dogs_chunks = [k for k, r in records.items() if "dogs" in k and "##s" in r["subtokens"]]
        assert dogs_chunks, "a chunk containing 'dogs' should list the ##s piece"


class TestCli:
    def test_export_round_trip(self, tiny_model_dir, tiny_corpus, tmp_path, capsys):
        code = main([
            "export", "--data", str(tiny_corpus / "dataset.jsonl"),
            "--kg", str(tiny_corpus / "kg.jsonl"), "--model", str(tiny_model_dir),
            "--out-dir", str(tmp_path / "out"), "--chunker", "pattern", "--json",
        ])
        assert code == 0
        out = json.loads(capsys.readouterr().out)
        assert (tmp_path / "out" / "embeddings.jsonl").exists()
        assert out["chunks"].endswith("chunks.jsonl")

    def test_missing_model_fails_without_partial_output(
        self, tiny_corpus, tmp_path, capsys
    ):
        out_dir = tmp_path / "out"
        code = main([
            "export", "--data", str(tiny_corpus / "dataset.jsonl"),
            "--kg", str(tiny_corpus / "kg.jsonl"), "--model", str(tmp_path / "nope"),
            "--out-dir", str(out_dir), "--chunker", "pattern",
        ])
        assert code == 1
        err = json.loads(capsys.readouterr().err)
        assert "cannot load model" in err["error"]
        assert not list(out_dir.glob("*")) if out_dir.exists() else True

    def test_empty_dataset_rejected(self, tiny_model_dir, tmp_path, capsys):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        kg = tmp_path / "kg.jsonl"
        kg.write_text('{"subj": "a", "rel": "r", "obj": "b"}\n')
        code = main([
            "export", "--data", str(empty), "--kg", str(kg),
            "--model", str(tiny_model_dir), "--out-dir", str(tmp_path / "out"),
        ])
        assert code == 1
