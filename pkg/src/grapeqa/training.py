"""Option scoring, cross-entropy training and evaluation over QA datasets.

Each answer option is scored from its working graph: the GNN output is mean-
pooled over non-context nodes, concatenated with the context's original
encoding and its post-GNN representation, and pushed through a two-layer
perceptron. Training minimizes cross-entropy over the per-example option
scores with an Adam optimizer split into a GNN-side and an (optional)
encoder-side learning-rate group. All randomness flows from the config seed,
so reruns produce bit-identical metrics.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import DiffValue
from .embeddings import EmbeddingProvider
from .errors import DataError, GraphError
from .gnn import GnnModel, GraphTensors, message_pass, prepare_graph_tensors
from .kg import KnowledgeGraph
from .pega import Chunker
from .pipeline import PipelineConfig, build_option_graph
from .relevance import RelevanceScorer
from .working_graph import WorkingGraph


@dataclass(frozen=True)
class QAExample:
    id: str
    question: str
    options: list[str]
    gold: int

    def __post_init__(self) -> None:
        if not 2 <= len(self.options) <= 8:
            raise ValueError(f"example {self.id}: need 2..8 options, got {len(self.options)}")
        if not 0 <= self.gold < len(self.options):
            raise ValueError(f"example {self.id}: gold index {self.gold} out of range")


def load_dataset(path) -> list[QAExample]:
    """Read {"id", "question", "options", "answer_idx"} JSONL records."""
    examples = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read dataset {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            example = QAExample(
                id=str(obj["id"]),
                question=str(obj["question"]),
                options=[str(o) for o in obj["options"]],
                gold=int(obj["answer_idx"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}:{lineno}: bad example: {exc}") from exc
        examples.append(example)
    return examples


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    lr_gnn: float = 1e-3
    lr_encoder: float = 1e-5
    seed: int = 0
    layers: int = 5
    dim: int = 200
    pega: bool = False
    canp: bool = False
    chunker: Chunker | None = None
    threshold: float = 0.0
    canp_min_survivors: int = 0

    def __post_init__(self) -> None:
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ValueError("epochs and batch size must be positive")
        if self.lr_gnn <= 0 or self.lr_encoder <= 0:
            raise ValueError("learning rates must be positive")

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            pega=self.pega,
            canp=self.canp,
            chunker=self.chunker,
            threshold=self.threshold,
            canp_min_survivors=self.canp_min_survivors,
        )


def score_option(
    model: GnnModel, graph: WorkingGraph | GraphTensors, z: np.ndarray | None = None
) -> DiffValue:
    """Differentiable correctness score for one option's working graph.

    ``z`` defaults to the context node's stored feature. A graph holding only
    the context node pools a zero vector.
    """
    gt = graph if isinstance(graph, GraphTensors) else prepare_graph_tensors(graph, model.dtype)
    if gt.context_pos is None:
        raise GraphError("score_option needs a context node")
    h, _ = message_pass(model, gt)
    if z is None:
        z = gt.features[gt.context_pos]
    z_const = ad.constant(np.asarray(z, dtype=model.dtype))

    others = np.array(
        [i for i in range(gt.num_nodes) if i != gt.context_pos], dtype=np.int64
    )
    if others.size:
        pooled = ad.vmean(ad.gather(h, others), axis=0)
    else:
        pooled = ad.constant(np.zeros(model.dim, dtype=model.dtype))
    h_z = ad.reshape(ad.gather(h, np.array([gt.context_pos])), (model.dim,))
    x = ad.concat([z_const, pooled, h_z], axis=0)
    hidden = ad.gelu(model._affine("score_hidden", x))
    return ad.add(ad.matmul(hidden, model.params["score_out_w"]), model.params["score_out_b"])


def cross_entropy(scores: DiffValue, gold: int) -> DiffValue:
    """Negative log-softmax of the gold option's score."""
    if scores.data.ndim != 1 or scores.data.size < 2:
        raise ValueError(f"need a flat vector of >= 2 scores, got shape {scores.data.shape}")
    if not 0 <= gold < scores.data.size:
        raise ValueError(f"gold index {gold} out of range")
    gold_score = ad.reshape(ad.gather(scores, np.array([gold])), ())
    return ad.add(ad.logsumexp(scores), ad.neg(gold_score))


class Adam:
    """Decoupled-rate adaptive optimizer over named parameter groups."""

    def __init__(
        self,
        groups: list[tuple[list[DiffValue], float]],
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.groups = [(params, lr) for params, lr in groups]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self._m = {}
        self._v = {}
        for params, _ in self.groups:
            for p in params:
                self._m[id(p)] = np.zeros_like(p.data)
                self._v[id(p)] = np.zeros_like(p.data)

    def zero_grad(self) -> None:
        for params, _ in self.groups:
            for p in params:
                p.grad = None

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        for params, lr in self.groups:
            for p in params:
                if p.grad is None:
                    continue
                g = p.grad
                m = self._m[id(p)] = self.beta1 * self._m[id(p)] + (1 - self.beta1) * g
                v = self._v[id(p)] = self.beta2 * self._v[id(p)] + (1 - self.beta2) * g * g
                m_hat = m / (1 - self.beta1**t)
                v_hat = v / (1 - self.beta2**t)
                p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class PreparedExample:
    example: QAExample
    graphs: list[GraphTensors]


def prepare_examples(
    examples: list[QAExample],
    kg: KnowledgeGraph,
    provider: EmbeddingProvider,
    scorer: RelevanceScorer,
    config: PipelineConfig,
    dtype=np.float32,
) -> list[PreparedExample]:
    """Run the graph pipeline once per (example, option) and tensorize."""
    prepared = []
    for example in examples:
        graphs = []
        for idx, option in enumerate(example.options):
            stages = build_option_graph(
                kg, provider, scorer, example.question, option, config,
                example_id=example.id, option_index=idx,
            )
            graphs.append(prepare_graph_tensors(stages.final, dtype))
        prepared.append(PreparedExample(example, graphs))
    return prepared


def _example_scores(model: GnnModel, prep: PreparedExample) -> DiffValue:
    per_option = [ad.reshape(score_option(model, gt), (1,)) for gt in prep.graphs]
    return ad.concat(per_option, axis=0)


@dataclass
class EvalResult:
    accuracy: float
    predictions: list[dict]


def evaluate_model(model: GnnModel, prepared: list[PreparedExample]) -> EvalResult:
    """Argmax over option scores; ties resolve to the lowest option index."""
    if not prepared:
        raise DataError("cannot evaluate on an empty dataset")
    predictions = []
    correct = 0
    for prep in prepared:
        scores = _example_scores(model, prep).data
        pred = int(np.argmax(scores))
        correct += int(pred == prep.example.gold)
        predictions.append(
            {
                "id": prep.example.id,
                "pred": pred,
                "gold": prep.example.gold,
                "scores": [float(s) for s in scores],
            }
        )
    return EvalResult(accuracy=correct / len(prepared), predictions=predictions)


@dataclass
class TrainResult:
    model: GnnModel
    metrics: list[dict] = field(default_factory=list)


def train(
    train_examples: list[QAExample],
    dev_examples: list[QAExample],
    kg: KnowledgeGraph,
    provider: EmbeddingProvider,
    scorer: RelevanceScorer,
    config: TrainConfig,
) -> TrainResult:
    """Full training loop; emits one metrics record per epoch.

    Graphs are constructed once up front (the pipeline does not depend on the
    trainable weights), then each epoch shuffles examples, accumulates the
    batch-mean cross-entropy and applies one optimizer step per batch.
    """
    if not train_examples:
        raise DataError("training set is empty")
    pipeline_config = config.pipeline()
    prepared = prepare_examples(train_examples, kg, provider, scorer, pipeline_config)
    dev_prepared = prepare_examples(dev_examples, kg, provider, scorer, pipeline_config)

    model = GnnModel(
        input_dim=provider.dim,
        num_graph_relations=kg.num_relations + 5,
        dim=config.dim,
        layers=config.layers,
        seed=config.seed,
        dtype=np.float32,
    )
    gnn_params = [p for _, p in model.parameter_items()]
    groups = [(gnn_params, config.lr_gnn)]
    encoder_params = getattr(provider, "trainable_parameters", None)
    if callable(encoder_params) and encoder_params():
        groups.append((encoder_params(), config.lr_encoder))
    optimizer = Adam(groups)

    rng = np.random.default_rng(config.seed)
    metrics: list[dict] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(prepared))
        epoch_loss = 0.0
        epoch_correct = 0
        for start in range(0, len(order), config.batch_size):
            batch = [prepared[i] for i in order[start : start + config.batch_size]]
            optimizer.zero_grad()
            losses = []
            for prep in batch:
                scores = _example_scores(model, prep)
                epoch_correct += int(int(np.argmax(scores.data)) == prep.example.gold)
                losses.append(ad.reshape(cross_entropy(scores, prep.example.gold), (1,)))
            batch_loss = ad.vmean(ad.concat(losses, axis=0))
            if not np.isfinite(batch_loss.data):
                raise GraphError(
                    f"non-finite loss at epoch {epoch}, batch starting at {start}; "
                    "lower the learning rate or inspect the inputs"
                )
            epoch_loss += float(batch_loss.data) * len(batch)
            ad.backward(batch_loss)
            optimizer.step()
        record = {
            "epoch": epoch,
            "train_loss": epoch_loss / len(prepared),
            "train_acc": epoch_correct / len(prepared),
            "dev_acc": evaluate_model(model, dev_prepared).accuracy if dev_prepared else None,
        }
        metrics.append(record)
    return TrainResult(model=model, metrics=metrics)


def write_metrics(path, metrics: list[dict]) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        for record in metrics:
            fh.write(json.dumps(record) + "\n")
    os.replace(tmp, path)


def gradient_check(
    model: GnnModel,
    graphs: list[GraphTensors],
    gold: int,
    step: float = 1e-4,
) -> dict:
    """Analytic gradients vs central finite differences over every parameter.

    Returns the per-parameter and global maximum relative error, with the
    denominator floored so that pure finite-difference noise on zero
    gradients does not register as failure.
    """

    def loss_value() -> float:
        scores = ad.concat(
            [ad.reshape(score_option(model, gt), (1,)) for gt in graphs], axis=0
        )
        return float(cross_entropy(scores, gold).data)

    model.zero_grad()
    scores = ad.concat([ad.reshape(score_option(model, gt), (1,)) for gt in graphs], axis=0)
    ad.backward(cross_entropy(scores, gold))
    analytic = {
        name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
        for name, p in model.parameter_items()
    }

    per_param = {}
    worst = 0.0
    for name, p in model.parameter_items():
        flat = p.data.reshape(-1)
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            hi = loss_value()
            flat[i] = keep - step
            lo = loss_value()
            flat[i] = keep
            fd[i] = (hi - lo) / (2 * step)
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1e-3)
        rel = float(np.max(np.abs(a - fd) / denom)) if flat.size else 0.0
        per_param[name] = rel
        worst = max(worst, rel)
    return {"max_rel_err": worst, "per_param": per_param}
