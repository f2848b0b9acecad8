"""Planted-rule synthetic corpora for desk-scale learning checks.

Two generators share one schema. In ``path`` mode the gold option is the one
whose entity is bridged to a question entity by a two-hop KG path, so the
discriminative signal lives in the graph structure. In ``chunk`` mode the
gold option is the only one wearing a lexicon noun phrase, so the signal only
exists when chunk augmentation is on: with it disabled, every option graph
looks structurally identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import DeterministicProvider
from .gnn import GraphTensors, prepare_graph_tensors
from .kg import from_triples
from .pega import POS_NOUN, POS_OTHER, RuleBasedChunker
from .pipeline import PipelineConfig, build_option_graph
from .relevance import RelevanceScorer
from .training import QAExample

MODE_PATH = "path"
MODE_CHUNK = "chunk"


@dataclass
class SyntheticData:
    mode: str
    triples: list[tuple[str, str, str]] = field(default_factory=list)
    train: list[QAExample] = field(default_factory=list)
    dev: list[QAExample] = field(default_factory=list)
    lexicon: dict[str, str] = field(default_factory=dict)


def _path_example(i: int, num_options: int, gold: int, data: SyntheticData) -> QAExample:
    qent = f"q{i}ent"
    bridge = f"b{i}mid"
    options = []
    for k in range(num_options):
        aent = f"a{i}v{k}"
        options.append(f"maybe {aent}")
        data.lexicon[aent] = POS_NOUN
        if k == gold:
            data.triples.append((qent, "linked_to", bridge))
            data.triples.append((bridge, "linked_to", aent))
        else:
            data.triples.append((aent, "linked_to", f"d{i}v{k}"))
    data.lexicon[qent] = POS_NOUN
    return QAExample(
        id=f"ex{i:04d}",
        question=f"what is linked to {qent} in the graph",
        options=options,
        gold=gold,
    )


def _chunk_example(i: int, num_options: int, gold: int, data: SyntheticData) -> QAExample:
    # every option reads "the <w1> <w2>" with per-example fresh words; only the
    # gold option's words are lexicon nouns, so only it yields a chunk and the
    # option texts are otherwise statistically indistinguishable
    noun_a, noun_b = f"n{i}x", f"n{i}y"
    data.lexicon[noun_a] = POS_NOUN
    data.lexicon[noun_b] = POS_NOUN
    options = []
    for k in range(num_options):
        if k == gold:
            options.append(f"the {noun_a} {noun_b}")
        else:
            options.append(f"the w{i}k{k}a w{i}k{k}b")
    return QAExample(
        id=f"ex{i:04d}",
        question=f"which option fits anchor case {i}",
        options=options,
        gold=gold,
    )


def make_planted_dataset(
    n_train: int,
    n_dev: int,
    num_options: int = 4,
    seed: int = 0,
    mode: str = MODE_PATH,
) -> SyntheticData:
    """Generate a seeded corpus whose gold options follow a known rule."""
    if mode not in (MODE_PATH, MODE_CHUNK):
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    data = SyntheticData(mode=mode)
    data.lexicon["maybe"] = POS_OTHER
    data.lexicon["graph"] = POS_OTHER
    if mode == MODE_CHUNK:
        # one shared entity keeps every working graph non-empty either way
        data.triples.append(("anchor", "related_to", "hubnode"))
    build = _path_example if mode == MODE_PATH else _chunk_example
    for i in range(n_train + n_dev):
        gold = int(rng.integers(num_options))
        example = build(i, num_options, gold, data)
        (data.train if i < n_train else data.dev).append(example)
    return data


def write_synthetic(data: SyntheticData, out_dir) -> dict[str, Path]:
    """Emit kg.jsonl, train.jsonl, dev.jsonl and lexicon.jsonl under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "kg": out / "kg.jsonl",
        "train": out / "train.jsonl",
        "dev": out / "dev.jsonl",
        "lexicon": out / "lexicon.jsonl",
    }
    with open(paths["kg"], "w", encoding="utf-8") as fh:
        for s, r, o in data.triples:
            fh.write(json.dumps({"subj": s, "rel": r, "obj": o}) + "\n")
    for split in ("train", "dev"):
        with open(paths[split], "w", encoding="utf-8") as fh:
            for ex in getattr(data, split):
                fh.write(
                    json.dumps(
                        {
                            "id": ex.id,
                            "question": ex.question,
                            "options": ex.options,
                            "answer_idx": ex.gold,
                        }
                    )
                    + "\n"
                )
    with open(paths["lexicon"], "w", encoding="utf-8") as fh:
        for token, pos in sorted(data.lexicon.items()):
            fh.write(json.dumps({"token": token, "pos": pos}) + "\n")
    return paths


@dataclass
class GradcheckSetup:
    """Tiny two-option fixture for finite-difference checks.

    The gold option's graph has six nodes covering all five node kinds:
    question entity, answer entity, one bridging extra node, the context node
    and two noun chunks.
    """

    graphs: list[GraphTensors]
    gold: int
    input_dim: int
    num_graph_relations: int


def gradcheck_setup(seed: int = 0, input_dim: int = 12) -> GradcheckSetup:
    kg = from_triples(
        [
            ("alpha", "rel_a", "beta"),
            ("beta", "rel_a", "gamma"),
            ("alpha", "rel_b", "delta"),
        ]
    )
    chunker = RuleBasedChunker(
        {"alpha": POS_NOUN, "thing": POS_NOUN, "gamma": POS_NOUN, "spot": POS_NOUN}
    )
    provider = DeterministicProvider(dim=input_dim, seed=seed + 1)
    scorer = RelevanceScorer.seeded(provider, seed=seed + 2)
    config = PipelineConfig(pega=True, chunker=chunker)
    question = "the alpha thing links where"
    options = ["near gamma spot", "plain zeta area"]
    graphs = []
    for idx, option in enumerate(options):
        stages = build_option_graph(
            kg, provider, scorer, question, option, config,
            example_id="gradcheck", option_index=idx,
        )
        graphs.append(prepare_graph_tensors(stages.final, np.float64))
    assert graphs[0].num_nodes == 6, "gradcheck fixture drifted from its six-node layout"
    return GradcheckSetup(
        graphs=graphs,
        gold=0,
        input_dim=input_dim,
        num_graph_relations=kg.num_relations + 5,
    )
