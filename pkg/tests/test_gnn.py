import numpy as np
import pytest

from grapeqa import GnnModel, GraphError, NodeKind, load_checkpoint, save_checkpoint
from grapeqa import autodiff as ad
from grapeqa.gnn import embed_types, message_pass, prepare_graph_tensors
from grapeqa.working_graph import WorkingGraph

from helpers import build_scored_wg


def tiny_model(wg, dim=8, layers=2, seed=0, dtype=np.float64, input_dim=16):
    return GnnModel(
        input_dim=input_dim,
        num_graph_relations=wg.num_relations,
        dim=dim,
        layers=layers,
        seed=seed,
        dtype=dtype,
    )


def single_node_wg(provider):
    wg = WorkingGraph(num_kg_relations=4)
    node = wg.add_node(NodeKind.CONTEXT, "only context", None)
    wg.features[node] = provider.encode("only context")
    return wg


class TestEmbedTypes:
    def test_same_kind_same_vector(self, dog_farm_wg):
        model = tiny_model(dog_farm_wg)
        u_map, _ = embed_types(model, dog_farm_wg)
        extras = dog_farm_wg.ids_of_kind(NodeKind.EXTRA)
        questions = dog_farm_wg.ids_of_kind(NodeKind.QUESTION_ENTITY)
        for ids in (extras, questions):
            for i in ids[1:]:
                np.testing.assert_array_equal(u_map[ids[0]], u_map[i])

    def test_relation_embedding_sees_source_kind(self, dog_farm_wg):
        model = tiny_model(dog_farm_wg)
        _, r_map = embed_types(model, dog_farm_wg)
        # find two edges with the same relation, same target, different source kinds
        by_rel_target = {}
        for (s, r, t), vec in r_map.items():
            by_rel_target.setdefault((r, t), []).append((s, vec))
        found = False
        for (r, t), entries in by_rel_target.items():
            kinds = {dog_farm_wg.nodes[s].kind for s, _ in entries}
            if len(kinds) > 1:
                (s1, v1), (s2, v2) = entries[0], entries[1]
                assert not np.allclose(v1, v2)
                found = True
                break
        assert found, "fixture should offer same-relation edges from different kinds"

    def test_shapes(self, dog_farm_wg):
        model = tiny_model(dog_farm_wg, dim=8)
        u_map, r_map = embed_types(model, dog_farm_wg)
        assert all(v.shape == (8,) for v in u_map.values())
        assert all(v.shape == (8,) for v in r_map.values())
        assert set(r_map) == set(map(tuple, dog_farm_wg.edges))

    def test_unknown_relation_rejected(self, dog_farm_wg):
        model = tiny_model(dog_farm_wg)
        broken = dog_farm_wg.copy()
        a, b = list(broken.nodes)[:2]
        broken.edges.append((a, 999, b))
        with pytest.raises(GraphError, match="999"):
            embed_types(model, broken)


class TestMessagePass:
    def test_isolated_node_reduces_to_self_message(self, provider):
        wg = single_node_wg(provider)
        model = tiny_model(wg, layers=1)
        h, aux = message_pass(model, wg, collect_attention=True)
        np.testing.assert_allclose(aux["attention"][0], [1.0])

        # replicate the single self-edge update by hand: h1 = f_n(1 * m_ss) + h0
        gt = prepare_graph_tensors(wg, np.float64)
        h0 = gt.features @ model.params["input_proj_w"].data + model.params["input_proj_b"].data
        u = model.params["node_type_table"].data[[0]]
        e = model.params["relation_table"].data[[model.self_rel_id]]
        gelu = lambda x: ad.gelu(ad.constant(x)).data
        r = gelu(
            np.concatenate([e, u, u], axis=1) @ model.params["relation_net_w"].data
            + model.params["relation_net_b"].data
        )
        m = gelu(
            np.concatenate([h0, u, r], axis=1) @ model.params["message_net_w"].data
            + model.params["message_net_b"].data
        )
        expected = gelu(
            m @ model.params["update_net_w"].data + model.params["update_net_b"].data
        ) + h0
        np.testing.assert_allclose(h.data, expected, rtol=1e-12)

    def test_attention_sums_to_one_per_node_per_layer(self, animals_kg, provider, scorer):
        wg = build_scored_wg(
            animals_kg, provider, scorer, "where is the dog and the cat", "farm kennel"
        )
        for trial in range(10):
            model = tiny_model(wg, layers=3, seed=trial)
            _, aux = message_pass(model, wg, collect_attention=True)
            assert len(aux["attention"]) == 3
            for alpha in aux["attention"]:
                sums = np.bincount(aux["seg_ids"], weights=alpha)
                np.testing.assert_allclose(sums, 1.0, atol=1e-6)

    def test_zero_layers_is_input_projection(self, dog_farm_wg):
        model = tiny_model(dog_farm_wg, layers=0)
        h, _ = message_pass(model, dog_farm_wg)
        gt = prepare_graph_tensors(dog_farm_wg, np.float64)
        expected = gt.features @ model.params["input_proj_w"].data
        expected = expected + model.params["input_proj_b"].data
        np.testing.assert_array_equal(h.data, expected)

    def test_zeroed_update_net_is_residual_identity(self, dog_farm_wg):
        model = tiny_model(dog_farm_wg, layers=3)
        model.params["update_net_w"].data[:] = 0.0
        model.params["update_net_b"].data[:] = 0.0
        h, _ = message_pass(model, dog_farm_wg)
        h0, _ = message_pass(tiny_model(dog_farm_wg, layers=0), dog_farm_wg)
        np.testing.assert_array_equal(h.data, h0.data)

    def test_permutation_equivariance_bit_exact(self, dog_farm_wg):
        model = tiny_model(dog_farm_wg, layers=2)
        h, _ = message_pass(model, dog_farm_wg)

        rng = np.random.default_rng(5)
        ids = sorted(dog_farm_wg.nodes)
        perm = {old: new for old, new in zip(ids, rng.permutation(ids))}
        relabeled = WorkingGraph(
            num_kg_relations=dog_farm_wg.num_kg_relations,
            option_index=dog_farm_wg.option_index,
        )
        relabeled.nodes = {perm[i]: n for i, n in dog_farm_wg.nodes.items()}
        relabeled.edges = [(perm[s], r, perm[t]) for s, r, t in dog_farm_wg.edges]
        relabeled.features = {perm[i]: v for i, v in dog_farm_wg.features.items()}
        relabeled.relevance = {perm[i]: v for i, v in dog_farm_wg.relevance.items()}
        relabeled._next_id = dog_farm_wg._next_id
        h_perm, _ = message_pass(model, relabeled)

        old_order = sorted(dog_farm_wg.nodes)
        new_order = sorted(relabeled.nodes)
        for i, old in enumerate(old_order):
            j = new_order.index(perm[old])
            np.testing.assert_array_equal(h.data[i], h_perm.data[j])

    def test_non_finite_activation_names_layer_and_node(self, dog_farm_wg):
        model = tiny_model(dog_farm_wg, layers=1)
        model.params["update_net_b"].data[:] = np.inf
        with pytest.raises(GraphError, match="layer 0"):
            message_pass(model, dog_farm_wg)

    def test_empty_graph_rejected(self):
        wg = WorkingGraph(num_kg_relations=0)
        with pytest.raises(GraphError, match="empty"):
            prepare_graph_tensors(wg)


class TestCheckpoint:
    def test_round_trip_is_bit_exact(self, dog_farm_wg, tmp_path):
        model = tiny_model(dog_farm_wg, dtype=np.float32)
        path = tmp_path / "model.gqa"
        save_checkpoint(model, path)
        loaded = load_checkpoint(path)
        for name, p in model.parameter_items():
            np.testing.assert_array_equal(p.data, loaded.params[name].data)
        # byte-for-byte stable on re-save
        path2 = tmp_path / "model2.gqa"
        save_checkpoint(loaded, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_reload_preserves_forward_pass(self, dog_farm_wg, tmp_path):
        model = tiny_model(dog_farm_wg, dtype=np.float32)
        h, _ = message_pass(model, dog_farm_wg)
        path = tmp_path / "model.gqa"
        save_checkpoint(model, path)
        h2, _ = message_pass(load_checkpoint(path), dog_farm_wg)
        np.testing.assert_array_equal(h.data, h2.data)

    def test_magic_validated(self, tmp_path):
        path = tmp_path / "bad.gqa"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(Exception, match="magic"):
            load_checkpoint(path)

    def test_truncated_payload_rejected(self, dog_farm_wg, tmp_path):
        model = tiny_model(dog_farm_wg, dtype=np.float32)
        path = tmp_path / "model.gqa"
        save_checkpoint(model, path)
        data = path.read_bytes()
        path.write_bytes(data + b"\x00\x00\x00\x00")
        with pytest.raises(Exception, match="trailing"):
            load_checkpoint(path)
