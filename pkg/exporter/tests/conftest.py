import json
from pathlib import Path

import pytest
import torch


def _build_tiny_model(target: Path) -> None:
    """Save a deterministic wordpiece tokenizer plus a tiny random BERT."""
    from tokenizers import Tokenizer
    from tokenizers.models import WordPiece
    from tokenizers.normalizers import BertNormalizer
    from tokenizers.pre_tokenizers import BertPreTokenizer
    from tokenizers.processors import TemplateProcessing
    from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

    # "dogs" is deliberately absent so it wordpieces into dog + ##s
    words = [
        "where", "is", "the", "dog", "cat", "farm", "city", "kennel",
        "animal", "guitar", "pick", "music", "a", "an", "on", "old", "what",
        "sleep", "house", "barn", "##s", "##er",
    ]
    vocab = {tok: i for i, tok in enumerate(
        ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + words
    )}
    backend = Tokenizer(WordPiece(vocab, unk_token="[UNK]"))
    backend.normalizer = BertNormalizer(lowercase=True)
    backend.pre_tokenizer = BertPreTokenizer()
    backend.post_processor = TemplateProcessing(
        single="[CLS] $A [SEP]",
        pair="[CLS] $A [SEP] $B [SEP]",
        special_tokens=[("[CLS]", vocab["[CLS]"]), ("[SEP]", vocab["[SEP]"])],
    )
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=backend, unk_token="[UNK]", pad_token="[PAD]",
        cls_token="[CLS]", sep_token="[SEP]", mask_token="[MASK]",
    )
    torch.manual_seed(7)
    config = BertConfig(
        vocab_size=len(vocab), hidden_size=16, num_hidden_layers=1,
        num_attention_heads=2, intermediate_size=32, max_position_embeddings=64,
    )
    BertModel(config).save_pretrained(target)
    tokenizer.save_pretrained(target)


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    target = tmp_path_factory.mktemp("tiny_model")
    _build_tiny_model(target)
    return target


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    examples = [
        {"id": "ex1", "question": "where is the dog", "options": ["the farm", "a city"],
         "answer_idx": 0},
        {"id": "ex2", "question": "where do the dogs sleep", "options": ["an old kennel", "music"],
         "answer_idx": 0},
        {"id": "ex3", "question": "what is a guitar pick", "options": ["music", "the barn"],
         "answer_idx": 0},
    ]
    triples = [
        {"subj": "dog", "rel": "IsA", "obj": "animal"},
        {"subj": "animal", "rel": "AtLocation", "obj": "farm"},
        {"subj": "dog", "rel": "AtLocation", "obj": "kennel"},
        {"subj": "kennel", "rel": "AtLocation", "obj": "farm"},
        {"subj": "guitar pick", "rel": "UsedFor", "obj": "music"},
    ]
    with open(root / "dataset.jsonl", "w") as fh:
        for rec in examples:
            fh.write(json.dumps(rec) + "\n")
    with open(root / "kg.jsonl", "w") as fh:
        for rec in triples:
            fh.write(json.dumps(rec) + "\n")
    return root
