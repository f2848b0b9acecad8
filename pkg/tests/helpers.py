"""Shared non-fixture helpers for the test suite."""

import json

from grapeqa import (
    build_working_graph,
    extract_subgraph,
    init_node_features,
    link_entities,
    score_working_graph,
)


def build_scored_wg(kg, provider, scorer, question, option, option_index=0):
    """Link -> extract -> context -> features -> relevance, no optional stages."""
    q = link_entities(question, kg, source="question")
    a = link_entities(option, kg, source="answer")
    wg = build_working_graph(
        extract_subgraph(kg, q, a, option_index=option_index), question, option
    )
    wg = init_node_features(wg, provider)
    return score_working_graph(scorer, wg)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return path
