"""Relation-type and node-type aware attention message passing over a WG.

One shared set of nets runs at every layer: messages are built from the
source representation, its type embedding and the edge's relation embedding;
attention logits come from query/key nets that additionally see each node's
relevance embedding; incoming attention is softmax-normalized per target
(self-loop included) and the aggregated message passes through an update net
with a residual connection.

Per-target reductions follow a canonical edge order keyed by node content
(kind, kg id, label) rather than local ids, so relabeling node ids permutes
the output bit-exactly.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import DiffValue
from .errors import DataError, GraphError
from .working_graph import NodeKind, WorkingGraph

KIND_INDEX = {
    NodeKind.CONTEXT: 0,
    NodeKind.QUESTION_ENTITY: 1,
    NodeKind.ANSWER_ENTITY: 2,
    NodeKind.EXTRA: 3,
    NodeKind.NOUN_CHUNK: 4,
}
NUM_KINDS = 5

CHECKPOINT_MAGIC = b"GQA1"


@dataclass
class GraphTensors:
    """Dense arrays for one working graph, ready for the message passer.

    Edges include one self-loop per node and are sorted by (target key,
    source key, relation id) where a node's key is its content, making the
    order invariant under local-id relabeling. ``seg_ids`` maps each edge to
    its target's segment (contiguous ascending), ``node_to_seg`` maps a dense
    node index to its segment.
    """

    local_ids: list[int]
    kind_ids: np.ndarray
    features: np.ndarray
    rho: np.ndarray
    rho_mask: np.ndarray
    src: np.ndarray
    tgt: np.ndarray
    rel: np.ndarray
    seg_ids: np.ndarray
    seg_starts: np.ndarray
    node_to_seg: np.ndarray
    context_pos: int | None
    num_graph_relations: int

    @property
    def num_nodes(self) -> int:
        return len(self.local_ids)

    @property
    def num_edges(self) -> int:
        return len(self.src)


def prepare_graph_tensors(wg: WorkingGraph, dtype=np.float32) -> GraphTensors:
    """Flatten a working graph into arrays; requires initialized features."""
    if not wg.nodes:
        raise GraphError("cannot run message passing on an empty graph")
    local_ids = sorted(wg.nodes)
    dense = {local: i for i, local in enumerate(local_ids)}
    missing = [i for i in local_ids if i not in wg.features]
    if missing:
        raise GraphError(f"nodes {missing} have no feature vectors")

    kind_ids = np.array([KIND_INDEX[wg.nodes[i].kind] for i in local_ids], dtype=np.int64)
    features = np.stack([np.asarray(wg.features[i], dtype=dtype) for i in local_ids])
    rho = np.array([wg.relevance.get(i, 0.0) for i in local_ids], dtype=dtype)
    rho_mask = np.array([1.0 if i in wg.relevance else 0.0 for i in local_ids], dtype=dtype)

    self_rel = wg.num_relations  # dedicated relation id for self-loops
    all_edges = list(wg.edges) + [(i, self_rel, i) for i in local_ids]

    def content_key(local: int) -> tuple:
        node = wg.nodes[local]
        return (KIND_INDEX[node.kind], -1 if node.kg_id is None else node.kg_id, node.label)

    all_edges.sort(key=lambda e: (content_key(e[2]), content_key(e[0]), e[1]))
    src = np.array([dense[s] for s, _, _ in all_edges], dtype=np.int64)
    rel = np.array([r for _, r, _ in all_edges], dtype=np.int64)
    tgt = np.array([dense[t] for _, _, t in all_edges], dtype=np.int64)

    # contiguous target runs -> segments; every node has a self-loop so every
    # node owns exactly one segment
    seg_ids = np.zeros(len(all_edges), dtype=np.int64)
    seg_of_node = {}
    seg = -1
    prev = None
    for pos, (_, _, t) in enumerate(all_edges):
        if t != prev:
            seg += 1
            prev = t
            seg_of_node[t] = seg
        seg_ids[pos] = seg
    seg_starts = np.unique(seg_ids, return_index=True)[1]
    node_to_seg = np.array([seg_of_node[i] for i in local_ids], dtype=np.int64)

    context = wg.context_id()
    return GraphTensors(
        local_ids=local_ids,
        kind_ids=kind_ids,
        features=features,
        rho=rho,
        rho_mask=rho_mask,
        src=src,
        tgt=tgt,
        rel=rel,
        seg_ids=seg_ids,
        seg_starts=seg_starts,
        node_to_seg=node_to_seg,
        context_pos=None if context is None else dense[context],
        num_graph_relations=wg.num_relations,
    )


class GnnModel:
    """All learnable parameters plus the scoring head.

    ``num_graph_relations`` is the working-graph relation space (KG relations
    plus the context/chunk relations); one extra embedding row serves the
    self-loop relation. Weight matrices are stored (fan_in, fan_out).
    """

    def __init__(
        self,
        input_dim: int,
        num_graph_relations: int,
        dim: int = 200,
        layers: int = 5,
        seed: int = 0,
        dtype=np.float32,
    ):
        if dim <= 0 or layers < 0 or input_dim <= 0 or num_graph_relations <= 0:
            raise ValueError("model dimensions must be positive (layers may be 0)")
        self.input_dim = input_dim
        self.num_graph_relations = num_graph_relations
        self.dim = dim
        self.layers = layers
        self.dtype = np.dtype(dtype)
        self.params: dict[str, DiffValue] = {}
        rng = np.random.default_rng(seed)
        d = dim

        def dense_init(name, fan_in, fan_out):
            w = rng.standard_normal((fan_in, fan_out)) / np.sqrt(fan_in)
            self.params[name + "_w"] = ad.parameter(w.astype(self.dtype))
            self.params[name + "_b"] = ad.parameter(np.zeros(fan_out, dtype=self.dtype))

        def table_init(name, rows):
            t = rng.standard_normal((rows, d)) / np.sqrt(d)
            self.params[name] = ad.parameter(t.astype(self.dtype))

        table_init("node_type_table", NUM_KINDS)
        table_init("relation_table", num_graph_relations + 1)
        dense_init("relation_net", 3 * d, d)
        dense_init("message_net", 3 * d, d)
        self.params["relevance_embed_w"] = ad.parameter(
            (rng.standard_normal(d) / np.sqrt(d)).astype(self.dtype)
        )
        self.params["relevance_embed_b"] = ad.parameter(np.zeros(d, dtype=self.dtype))
        self.params["relevance_default"] = ad.parameter(
            (rng.standard_normal(d) / np.sqrt(d)).astype(self.dtype)
        )
        dense_init("query_net", 3 * d, d)
        dense_init("key_net", 4 * d, d)
        dense_init("update_net", d, d)
        dense_init("input_proj", input_dim, d)
        dense_init("score_hidden", input_dim + 2 * d, d)
        self.params["score_out_w"] = ad.parameter(
            (rng.standard_normal(d) / np.sqrt(d)).astype(self.dtype)
        )
        self.params["score_out_b"] = ad.parameter(np.zeros((), dtype=self.dtype))

    @property
    def self_rel_id(self) -> int:
        return self.num_graph_relations

    def parameter_items(self) -> list[tuple[str, DiffValue]]:
        return list(self.params.items())

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def _affine(self, name: str, x: DiffValue) -> DiffValue:
        return ad.add(ad.matmul(x, self.params[name + "_w"]), self.params[name + "_b"])

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        return {name: tuple(p.data.shape) for name, p in self.params.items()}


def embed_types(
    model: GnnModel, wg: WorkingGraph
) -> tuple[dict[int, np.ndarray], dict[tuple[int, int, int], np.ndarray]]:
    """Node-type embeddings per node and relation embeddings per edge.

    The relation embedding mixes the edge's relation row with both endpoint
    type embeddings, so it is sensitive to the node kinds it connects.
    Unknown relation ids are rejected.
    """
    bad = sorted({r for _, r, _ in wg.edges if r >= model.num_graph_relations or r < 0})
    if bad:
        raise GraphError(f"edges use relation ids unknown to the model: {bad}")
    type_table = model.params["node_type_table"].data
    u_map = {i: type_table[KIND_INDEX[n.kind]] for i, n in wg.nodes.items()}
    r_map: dict[tuple[int, int, int], np.ndarray] = {}
    rel_table = model.params["relation_table"].data
    w = model.params["relation_net_w"].data
    b = model.params["relation_net_b"].data
    for s, r, t in wg.edges:
        x = np.concatenate([rel_table[r], u_map[s], u_map[t]])
        r_map[(s, r, t)] = ad.gelu(ad.constant(x @ w + b)).data
    return u_map, r_map


def message_pass(
    model: GnnModel,
    graph: WorkingGraph | GraphTensors,
    collect_attention: bool = False,
) -> tuple[DiffValue, dict]:
    """Run ``model.layers`` rounds of attention aggregation.

    Returns the final node representations (rows follow ascending local id)
    and an aux dict with per-layer attention weights and the edge/segment
    layout when ``collect_attention`` is set.
    """
    gt = graph if isinstance(graph, GraphTensors) else prepare_graph_tensors(graph, model.dtype)
    if gt.rel.size and int(gt.rel.max()) > model.self_rel_id:
        raise GraphError(
            f"graph uses relation id {int(gt.rel.max())} outside the model's "
            f"table of {model.self_rel_id + 1} relations"
        )
    n, d = gt.num_nodes, model.dim
    inv_sqrt_d = 1.0 / math.sqrt(d)  # python float so float32 graphs stay float32

    h = model._affine("input_proj", ad.constant(gt.features))
    aux: dict = {"attention": [], "seg_ids": gt.seg_ids, "tgt": gt.tgt, "src": gt.src}
    if model.layers == 0:
        return h, aux

    # layer-independent pieces
    u = ad.gather(model.params["node_type_table"], gt.kind_ids)
    e = ad.gather(model.params["relation_table"], gt.rel)
    u_src = ad.gather(u, gt.src)
    u_tgt = ad.gather(u, gt.tgt)
    r = ad.gelu(model._affine("relation_net", ad.concat([e, u_src, u_tgt], axis=1)))

    rho_col = ad.constant(gt.rho.reshape(n, 1))
    mask_col = ad.constant(gt.rho_mask.reshape(n, 1))
    inv_mask_col = ad.constant((1.0 - gt.rho_mask).reshape(n, 1))
    scored = ad.add(ad.mul(rho_col, model.params["relevance_embed_w"]),
                    model.params["relevance_embed_b"])
    rho_emb = ad.add(ad.mul(mask_col, scored),
                     ad.mul(inv_mask_col, model.params["relevance_default"]))
    rho_emb_tgt = ad.gather(rho_emb, gt.tgt)

    for layer in range(model.layers):
        h_src = ad.gather(h, gt.src)
        h_tgt = ad.gather(h, gt.tgt)
        m = ad.gelu(model._affine("message_net", ad.concat([h_src, u_src, r], axis=1)))
        q = ad.gelu(model._affine("query_net", ad.concat([h, u, rho_emb], axis=1)))
        k = ad.gelu(model._affine("key_net",
                                  ad.concat([h_tgt, u_tgt, rho_emb_tgt, r], axis=1)))
        gamma = ad.scale(ad.vsum(ad.mul(ad.gather(q, gt.src), k), axis=1), inv_sqrt_d)

        # softmax over each target's incoming edges; the max shift is constant
        seg_max = np.maximum.reduceat(gamma.data, gt.seg_starts)
        ex = ad.vexp(ad.add(gamma, ad.constant(-seg_max[gt.seg_ids])))
        denom = ad.segment_sum(ex, gt.seg_ids, n)
        alpha = ad.div(ex, ad.gather(denom, gt.seg_ids))
        weighted = ad.mul(ad.reshape(alpha, (gt.num_edges, 1)), m)
        agg = ad.gather(ad.segment_sum(weighted, gt.seg_ids, n), gt.node_to_seg)
        h = ad.add(ad.gelu(model._affine("update_net", agg)), h)

        if not np.all(np.isfinite(h.data)):
            rows = np.where(~np.isfinite(h.data).all(axis=1))[0]
            bad = [gt.local_ids[i] for i in rows]
            raise GraphError(f"non-finite activation at layer {layer}, nodes {bad}")
        if collect_attention:
            aux["attention"].append(alpha.data.copy())
    return h, aux


def save_checkpoint(model: GnnModel, path) -> None:
    """Binary checkpoint: magic, JSON header with named shapes, float32 payload.

    Parameters are serialized little-endian in declaration order; a float32
    model round-trips bit-exactly.
    """
    header = {
        "dim": model.dim,
        "layers": model.layers,
        "input_dim": model.input_dim,
        "num_graph_relations": model.num_graph_relations,
        "params": [[name, list(p.data.shape)] for name, p in model.parameter_items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        for _, p in model.parameter_items():
            fh.write(np.ascontiguousarray(p.data, dtype="<f4").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> GnnModel:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if raw[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: bad checkpoint magic {raw[:4]!r}")
    header_len = int.from_bytes(raw[4:8], "little")
    try:
        header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint header: {exc}") from exc
    model = GnnModel(
        input_dim=header["input_dim"],
        num_graph_relations=header["num_graph_relations"],
        dim=header["dim"],
        layers=header["layers"],
        dtype=np.float32,
    )
    expected = model.expected_shapes()
    offset = 8 + header_len
    seen = []
    for name, shape in header["params"]:
        shape = tuple(shape)
        seen.append(name)
        if name not in expected or expected[name] != shape:
            raise DataError(
                f"{path}: checkpoint tensor {name!r} with shape {shape} does not "
                f"match expected {expected.get(name)}"
            )
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = np.frombuffer(raw, dtype="<f4", count=count, offset=offset).reshape(shape)
        offset += 4 * count
        model.params[name].data = np.array(data, dtype=np.float32)
    if set(seen) != set(expected):
        raise DataError(f"{path}: checkpoint misses tensors {sorted(set(expected) - set(seen))}")
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes after parameters")
    return model


def check_checkpoint_compat(header_path, model: GnnModel) -> None:
    """Raise listing every tensor whose stored shape disagrees with ``model``."""
    loaded = load_checkpoint(header_path)
    mismatches = [
        f"{name}: checkpoint {tuple(loaded.params[name].data.shape)} vs "
        f"expected {tuple(p.data.shape)}"
        for name, p in model.parameter_items()
        if tuple(loaded.params[name].data.shape) != tuple(p.data.shape)
    ]
    if mismatches:
        raise DataError("checkpoint/config shape mismatch: " + "; ".join(mismatches))
