"""Offline transformer feature exporter for the working-graph QA engine."""

from .chunkers import PatternChunker, SpacyChunker, make_chunker
from .export import export_features
from .io import Example, ExportError, pair_text, read_dataset, read_kg_labels

__all__ = [
    "Example",
    "ExportError",
    "PatternChunker",
    "SpacyChunker",
    "export_features",
    "make_chunker",
    "pair_text",
    "read_dataset",
    "read_kg_labels",
]

__version__ = "0.1.0"
