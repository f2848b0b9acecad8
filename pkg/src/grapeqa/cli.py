"""Command-line surface: build graphs, report stats, train, evaluate, gradcheck.

Exit codes are stable: 0 success, 1 data error (machine-readable JSON on
stderr), 2 usage error. Every command is deterministic under a fixed --seed;
--json switches stdout to a single JSON document.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .embeddings import DeterministicProvider, EmbeddingProvider, FileEmbeddingProvider
from .errors import DataError, GraphError
from .gnn import GnnModel, load_checkpoint, save_checkpoint
from .pega import ExternalChunker, RandomWordsChunker, RuleBasedChunker
from .pipeline import PipelineConfig, build_option_graph
from .relevance import RelevanceScorer
from .stats import compute_stats, stats_from_pipeline
from .synthetic import gradcheck_setup, make_planted_dataset, write_synthetic
from .training import (
    TrainConfig,
    evaluate_model,
    gradient_check,
    load_dataset,
    prepare_examples,
    train,
    write_metrics,
)
from .working_graph import WorkingGraph, read_wg_jsonl, write_wg_jsonl
from . import kg as kg_mod

DEFAULT_EMBED_DIM = 64
GRADCHECK_TOLERANCE = 1e-4


class UsageError(Exception):
    pass


def _provider(args) -> EmbeddingProvider:
    if getattr(args, "embeddings", None):
        return FileEmbeddingProvider(args.embeddings)
    return DeterministicProvider(dim=DEFAULT_EMBED_DIM, seed=0)


def _scorer() -> RelevanceScorer:
    # The relevance/cluster scorer always runs on the built-in encoder so its
    # scores do not depend on which feature embeddings are plugged in.
    return RelevanceScorer.seeded(DeterministicProvider(dim=DEFAULT_EMBED_DIM, seed=0), seed=0)


def _chunker(args):
    value = getattr(args, "chunker", None)
    if value is None:
        return None
    if value == "rule":
        if not getattr(args, "pos_lexicon", None):
            raise UsageError("--chunker rule requires --pos-lexicon")
        return RuleBasedChunker.from_file(args.pos_lexicon)
    if value.startswith("random:"):
        try:
            fraction = float(value.split(":", 1)[1])
        except ValueError as exc:
            raise UsageError(f"bad random chunker fraction in {value!r}") from exc
        return RandomWordsChunker(fraction, seed=args.seed)
    if value.startswith("external:"):
        return ExternalChunker(value.split(":", 1)[1])
    raise UsageError(f"unknown chunker {value!r} (use rule, random:FRAC, external:PATH)")


def _pipeline_config(args) -> PipelineConfig:
    chunker = _chunker(args)
    if args.pega and chunker is None:
        raise UsageError("--pega requires --chunker")
    return PipelineConfig(
        pega=args.pega,
        canp=args.canp,
        chunker=chunker,
        threshold=args.threshold,
        canp_min_survivors=args.canp_min_survivors,
    )


def _emit(args, obj: dict, human: str | None = None) -> None:
    if args.json:
        print(json.dumps(obj, sort_keys=True))
    else:
        print(human if human is not None else json.dumps(obj, sort_keys=True))


def cmd_build_wg(args) -> int:
    kg = kg_mod.load_kg(args.kg, auto_create_nodes=args.auto_create_nodes)
    provider = _provider(args)
    scorer = _scorer()
    config = _pipeline_config(args)
    examples = load_dataset(args.data)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for example in examples:
        for idx, option in enumerate(example.options):
            stages = build_option_graph(
                kg, provider, scorer, example.question, option, config,
                example_id=example.id, option_index=idx,
            )
            path = out_dir / f"{example.id}__opt{idx}.jsonl"
            write_wg_jsonl(path, stages.stages)
            written.append(str(path))
    _emit(args, {"files": len(written), "out": str(out_dir)},
          f"wrote {len(written)} working-graph files to {out_dir}")
    return 0


def cmd_stats(args) -> int:
    if args.wg_dir:
        files = sorted(Path(args.wg_dir).glob("*.jsonl"))
        if not files:
            raise DataError(f"no working-graph files under {args.wg_dir}")
        graphs: list[WorkingGraph] = []
        example_ids = set()
        for path in files:
            stages = read_wg_jsonl(path)
            if not stages:
                raise DataError(f"{path}: empty working-graph file")
            graphs.append(stages[-1][1])
            example_ids.add(path.stem.split("__opt")[0])
        report = compute_stats(graphs, num_examples=len(example_ids))
    else:
        if not (args.kg and args.data):
            raise UsageError("stats needs either --wg-dir or both --kg and --data")
        kg = kg_mod.load_kg(args.kg, auto_create_nodes=args.auto_create_nodes)
        examples = load_dataset(args.data)
        report = stats_from_pipeline(kg, _provider(args), _scorer(), examples,
                                     _pipeline_config(args))
    obj = report.to_json_obj()
    lines = [f"graphs: {obj['num_graphs']} (examples: {obj['num_examples']})"]
    lines += [f"mean {k}: {v:.2f}" for k, v in obj["means"].items()]
    lines.append(
        f"unique kg labels: {obj['unique_kg_labels']}, unique chunk labels: "
        f"{obj['unique_chunk_labels']}, overlap: {obj['overlap']}"
    )
    _emit(args, obj, "\n".join(lines))
    return 0


def _train_config(args) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch,
        lr_gnn=args.lr_gnn,
        lr_encoder=args.lr_encoder,
        seed=args.seed,
        layers=args.layers,
        dim=args.dim,
        pega=args.pega,
        canp=args.canp,
        chunker=_chunker(args),
        threshold=args.threshold,
        canp_min_survivors=args.canp_min_survivors,
    )


def cmd_train(args) -> int:
    kg = kg_mod.load_kg(args.kg, auto_create_nodes=args.auto_create_nodes)
    provider = _provider(args)
    scorer = _scorer()
    config = _train_config(args)
    if args.pega and config.chunker is None:
        raise UsageError("--pega requires --chunker")
    train_examples = load_dataset(args.data)
    dev_examples = load_dataset(args.dev_data) if args.dev_data else train_examples
    result = train(train_examples, dev_examples, kg, provider, scorer, config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.jsonl"
    checkpoint_path = out_dir / "model.gqa"
    write_metrics(metrics_path, result.metrics)
    save_checkpoint(result.model, checkpoint_path)
    last = result.metrics[-1]
    _emit(
        args,
        {"metrics": str(metrics_path), "checkpoint": str(checkpoint_path), "final": last},
        f"epoch {last['epoch']}: train_loss={last['train_loss']:.4f} "
        f"train_acc={last['train_acc']:.3f} dev_acc={last['dev_acc']}",
    )
    return 0


def cmd_eval(args) -> int:
    kg = kg_mod.load_kg(args.kg, auto_create_nodes=args.auto_create_nodes)
    provider = _provider(args)
    scorer = _scorer()
    model = load_checkpoint(args.checkpoint)
    expected = GnnModel(
        input_dim=provider.dim,
        num_graph_relations=kg.num_relations + 5,
        dim=args.dim if args.dim is not None else model.dim,
        layers=args.layers if args.layers is not None else model.layers,
        seed=0,
        dtype=np.float32,
    )
    mismatches = [
        f"{name}: checkpoint {tuple(model.params[name].data.shape) if name in model.params else None}"
        f" vs expected {tuple(p.data.shape)}"
        for name, p in expected.parameter_items()
        if name not in model.params
        or tuple(model.params[name].data.shape) != tuple(p.data.shape)
    ]
    if mismatches:
        raise DataError("checkpoint incompatible with config: " + "; ".join(mismatches))
    examples = load_dataset(args.data)
    config = _pipeline_config(args)
    prepared = prepare_examples(examples, kg, provider, scorer, config, dtype=model.dtype)
    result = evaluate_model(model, prepared)
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", encoding="utf-8") as fh:
            for record in result.predictions:
                fh.write(json.dumps(record) + "\n")
    _emit(args, {"accuracy": result.accuracy, "examples": len(result.predictions)},
          f"accuracy {result.accuracy:.4f} over {len(result.predictions)} examples")
    return 0


def cmd_gradcheck(args) -> int:
    setup = gradcheck_setup(seed=args.seed)
    model = GnnModel(
        input_dim=setup.input_dim,
        num_graph_relations=setup.num_graph_relations,
        dim=8,
        layers=2,
        seed=args.seed,
        dtype=np.float64,
    )
    report = gradient_check(model, setup.graphs, setup.gold)
    passed = report["max_rel_err"] < GRADCHECK_TOLERANCE
    _emit(
        args,
        {"max_rel_err": report["max_rel_err"], "tolerance": GRADCHECK_TOLERANCE,
         "pass": passed},
        f"gradcheck max relative error {report['max_rel_err']:.3e} "
        f"({'pass' if passed else 'FAIL'} at {GRADCHECK_TOLERANCE})",
    )
    return 0 if passed else 1


def cmd_synth(args) -> int:
    data = make_planted_dataset(
        n_train=args.train_size,
        n_dev=args.dev_size,
        num_options=args.options,
        seed=args.seed,
        mode=args.mode,
    )
    paths = write_synthetic(data, args.out)
    _emit(args, {k: str(v) for k, v in paths.items()},
          "\n".join(f"{k}: {v}" for k, v in paths.items()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="grapeqa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_pipeline=True):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--json", action="store_true", help="emit JSON on stdout")
        if with_pipeline:
            p.add_argument("--kg", help="knowledge graph JSONL")
            p.add_argument("--data", help="dataset JSONL")
            p.add_argument("--embeddings", help="feature embeddings JSONL")
            p.add_argument("--auto-create-nodes", action="store_true")
            p.add_argument("--pega", action="store_true", help="add noun-chunk nodes")
            p.add_argument("--canp", action="store_true", help="prune worst extra-node cluster")
            p.add_argument("--chunker", help="rule | random:FRAC | external:PATH")
            p.add_argument("--pos-lexicon", help="JSONL lexicon for the rule chunker")
            p.add_argument("--threshold", type=float, default=0.0)
            p.add_argument("--canp-min-survivors", type=int, default=0)

    p = sub.add_parser("build-wg", help="write per-option working graphs")
    common(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_wg, needs=("kg", "data"))

    p = sub.add_parser("stats", help="node-count statistics")
    common(p)
    p.add_argument("--wg-dir", help="aggregate previously written graph files")
    p.set_defaults(func=cmd_stats, needs=())

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--dev-data", help="held-out dataset (defaults to --data)")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--lr-gnn", type=float, default=1e-3)
    p.add_argument("--lr-encoder", type=float, default=1e-5)
    p.add_argument("--layers", type=int, default=5)
    p.add_argument("--dim", type=int, default=200)
    p.set_defaults(func=cmd_train, needs=("kg", "data"))

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", help="write per-example predictions JSONL")
    p.add_argument("--layers", type=int, default=None)
    p.add_argument("--dim", type=int, default=None)
    p.set_defaults(func=cmd_eval, needs=("kg", "data"))

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    common(p, with_pipeline=False)
    p.set_defaults(func=cmd_gradcheck, needs=())

    p = sub.add_parser("synth", help="generate a planted-rule dataset")
    common(p, with_pipeline=False)
    p.add_argument("--out", required=True)
    p.add_argument("--train-size", type=int, default=500)
    p.add_argument("--dev-size", type=int, default=100)
    p.add_argument("--options", type=int, default=4)
    p.add_argument("--mode", choices=["path", "chunk"], default="path")
    p.set_defaults(func=cmd_synth, needs=())

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    missing = [flag for flag in getattr(args, "needs", ()) if not getattr(args, flag, None)]
    if missing:
        parser.error(f"missing required arguments: {', '.join('--' + m for m in missing)}")
    try:
        return args.func(args)
    except UsageError as exc:
        print(json.dumps({"error": str(exc), "kind": "usage"}), file=sys.stderr)
        return 2
    except (DataError, GraphError, ValueError) as exc:
        print(json.dumps({"error": str(exc), "kind": "data"}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
