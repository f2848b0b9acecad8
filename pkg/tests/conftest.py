from pathlib import Path

import pytest

from grapeqa import DeterministicProvider, RelevanceScorer, from_triples

from helpers import build_scored_wg

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def animals_kg():
    return from_triples(
        [
            ("dog", "IsA", "animal"),
            ("cat", "IsA", "animal"),
            ("animal", "AtLocation", "farm"),
            ("dog", "AtLocation", "kennel"),
            ("kennel", "AtLocation", "farm"),
        ]
    )


@pytest.fixture
def provider():
    return DeterministicProvider(dim=16, seed=0)


@pytest.fixture
def scorer(provider):
    return RelevanceScorer.seeded(provider, score_dim=8, seed=0)


@pytest.fixture
def dog_farm_wg(animals_kg, provider, scorer):
    return build_scored_wg(animals_kg, provider, scorer, "where is the dog", "farm")
