"""JSONL readers for the dataset and knowledge-graph file contracts.

These mirror the consumer's formats without importing it: datasets are
{"id", "question", "options", "answer_idx"} records, KG files are
{"subj", "rel", "obj"} edges with optional {"node": ...} declarations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class ExportError(Exception):
    pass


@dataclass(frozen=True)
class Example:
    id: str
    question: str
    options: tuple[str, ...]


def read_dataset(path: str | Path) -> list[Example]:
    examples = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ExportError(f"cannot read dataset {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            examples.append(
                Example(str(obj["id"]), str(obj["question"]),
                        tuple(str(o) for o in obj["options"]))
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ExportError(f"{path}:{lineno}: bad example record: {exc}") from exc
    if not examples:
        raise ExportError(f"{path}: dataset is empty")
    return examples


def read_kg_labels(path: str | Path) -> list[str]:
    """Unique node labels in first-appearance order."""
    labels: list[str] = []
    seen: set[str] = set()

    def add(label: str) -> None:
        if label not in seen:
            seen.add(label)
            labels.append(label)

    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ExportError(f"cannot read KG {path}: {exc}") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ExportError(f"{path}:{lineno}: malformed JSON: {exc}") from exc
        if "node" in obj:
            add(str(obj["node"]))
        elif {"subj", "obj"} <= obj.keys():
            add(str(obj["subj"]))
            add(str(obj["obj"]))
        else:
            raise ExportError(f"{path}:{lineno}: expected an edge or node record")
    return labels


def pair_text(question: str, option: str) -> str:
    """Concatenated QA text; must match the consumer's construction exactly."""
    return f"{question} {option}"
