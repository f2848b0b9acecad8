import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from grapeqa import DataError, from_triples, link_entities, load_kg
from grapeqa.kg import MAX_MATCH_TOKENS, normalize, tokenize_spans

from helpers import write_jsonl


def oracle_link(text, kg):
    """Independent leftmost-longest matcher: enumerate every candidate n-gram
    against the normalized label set, then sweep keeping non-overlapping spans
    preferring earlier starts and longer matches."""
    labels = {}
    for i, label in enumerate(kg.labels):
        norm = normalize(label)
        if norm and norm not in labels:
            labels[norm] = i
    tokens = tokenize_spans(text)
    candidates = []
    for i in range(len(tokens)):
        for n in range(1, MAX_MATCH_TOKENS + 1):
            if i + n > len(tokens):
                break
            gram = " ".join(t for t, _, _ in tokens[i : i + n])
            if gram in labels:
                candidates.append((i, n, labels[gram]))
    candidates.sort(key=lambda c: (c[0], -c[1]))
    taken = []
    covered_until = -1
    for i, n, concept in candidates:
        if i > covered_until:
            taken.append((concept, tokens[i][1], tokens[i + n - 1][2]))
            covered_until = i + n - 1
    return taken


class TestLoadKg:
    def test_three_line_file(self, tmp_path):
        path = write_jsonl(
            tmp_path / "kg.jsonl",
            [
                {"subj": "dog", "rel": "IsA", "obj": "animal"},
                {"subj": "cat", "rel": "IsA", "obj": "animal"},
                {"subj": "animal", "rel": "AtLocation", "obj": "farm"},
            ],
        )
        kg = load_kg(path)
        assert kg.num_nodes == 4
        assert kg.num_declared_relations == 2
        assert len(kg.edges) == 6  # inverse materialization doubles edges

    def test_inverse_pairing(self, animals_kg):
        for src, rel, dst in animals_kg.edges:
            assert animals_kg.has_edge(dst, animals_kg.inverse_relation(rel), src)
        assert animals_kg.relation_names[1] == "IsA_inv"

    def test_empty_file_is_valid(self, tmp_path):
        path = tmp_path / "kg.jsonl"
        path.write_text("")
        kg = load_kg(path)
        assert kg.num_nodes == 0 and len(kg.edges) == 0

    def test_auto_create_nodes(self, tmp_path):
        records = [
            {"node": "dog"},
            {"node": "animal"},
            {"subj": "dog", "rel": "IsA", "obj": "animal"},
            {"subj": "cat", "rel": "IsA", "obj": "animal"},
        ]
        path = write_jsonl(tmp_path / "kg.jsonl", records)
        with pytest.raises(DataError, match="undeclared"):
            load_kg(path)
        kg = load_kg(path, auto_create_nodes=True)
        distinct_labels = {"dog", "animal", "cat"}
        assert kg.num_nodes == len(distinct_labels)

    def test_malformed_line_reports_lineno(self, tmp_path):
        path = tmp_path / "kg.jsonl"
        path.write_text('{"subj": "a", "rel": "r", "obj": "b"}\nnot json\n')
        with pytest.raises(DataError, match=":2"):
            load_kg(path)

    def test_missing_keys_rejected(self, tmp_path):
        path = write_jsonl(tmp_path / "kg.jsonl", [{"subj": "a", "rel": "r"}])
        with pytest.raises(DataError, match=":1"):
            load_kg(path)

    def test_duplicate_triple_rejected(self, tmp_path):
        rec = {"subj": "a", "rel": "r", "obj": "b"}
        path = write_jsonl(tmp_path / "kg.jsonl", [rec, rec])
        with pytest.raises(DataError, match="duplicate"):
            load_kg(path)

    def test_deterministic_load(self, tmp_path):
        records = [
            {"subj": "x", "rel": "r1", "obj": "y"},
            {"subj": "y", "rel": "r2", "obj": "z"},
        ]
        a = load_kg(write_jsonl(tmp_path / "a.jsonl", records))
        b = load_kg(write_jsonl(tmp_path / "b.jsonl", records))
        assert a.labels == b.labels
        assert a.relation_names == b.relation_names
        assert a.edges == b.edges


class TestLinkEntities:
    def test_dog_on_the_farm(self, animals_kg):
        matches = oracle_link("a dog on the farm", animals_kg)
        got = link_entities("a dog on the farm", animals_kg)
        assert [(m.concept_id, m.start, m.end) for m in got] == matches
        assert {animals_kg.label(m.concept_id) for m in got} == {"dog", "farm"}

    def test_empty_text(self, animals_kg):
        assert link_entities("", animals_kg) == []
        assert link_entities("   ", animals_kg) == []

    def test_maximal_match_wins(self):
        kg = from_triples(
            [("guitar", "RelatedTo", "music"), ("guitar pick", "UsedFor", "guitar")]
        )
        got = link_entities("a guitar pick please", kg)
        assert [kg.label(m.concept_id) for m in got] == ["guitar pick"]
        assert got == oracle_link_as_matches("a guitar pick please", kg)

    def test_case_and_whitespace_invariance(self, animals_kg):
        text = "The  DOG  sat\tnear the FaRm"
        a = link_entities(text, animals_kg)
        b = link_entities(text.upper(), animals_kg)
        assert [m.concept_id for m in a] == [m.concept_id for m in b]

    def test_spans_lie_in_text_and_do_not_overlap(self, animals_kg):
        text = "dog cat farm kennel animal dog"
        got = link_entities(text, animals_kg)
        prev_end = -1
        for m in got:
            assert 0 <= m.start < m.end <= len(text)
            assert m.start > prev_end
            prev_end = m.end
            assert normalize(text[m.start : m.end]) == normalize(
                animals_kg.label(m.concept_id)
            )

    @settings(
        max_examples=60,
        deadline=None,
        suppress_health_check=[HealthCheck.function_scoped_fixture],
    )
    @given(st.lists(st.sampled_from(
        ["dog", "cat", "farm", "kennel", "animal", "the", "on", "blue", "guitar"]
    ), min_size=0, max_size=12))
    def test_matches_oracle_on_random_token_soup(self, animals_kg, tokens):
        text = " ".join(tokens)
        got = [(m.concept_id, m.start, m.end) for m in link_entities(text, animals_kg)]
        assert got == oracle_link(text, animals_kg)

    def test_results_subset_of_kg_ids(self, animals_kg):
        got = link_entities("dog farm unknown words here", animals_kg)
        assert {m.concept_id for m in got} <= set(range(animals_kg.num_nodes))


def oracle_link_as_matches(text, kg):
    from grapeqa import EntityMatch

    return [EntityMatch(c, s, e, "question") for c, s, e in oracle_link(text, kg)]
