"""Shared fixtures: taxonomy, synthetic corpora, and synonym tables."""

from __future__ import annotations

import numpy as np
import pytest

from fallacylab.augment import TableCandidates
from fallacylab.corpus import Argument, stratified_split
from fallacylab.encoders import HashingEncoder, TinyEncoderConfig
from fallacylab.taxonomy import FallacyTaxonomy

# word pools for synthetic arguments; sentences are 9-12 tokens so a single
# substitution keeps hashing-cosine above the 0.85 augmentation threshold
FILLERS = [
    "weather", "report", "city", "market", "green", "tall", "river", "music",
    "window", "engine", "bright", "cloud", "road", "silver", "garden", "stone",
    "paper", "signal", "harbor", "lantern",
]

KEYWORDS = {
    "fallacious": "certainly",
    "not_fallacious": "possibly",
}


@pytest.fixture(scope="session")
def taxonomy():
    return FallacyTaxonomy.load()


@pytest.fixture(scope="session")
def tiny_encoder_cfg():
    return TinyEncoderConfig(dim=32, heads=2, layers=2, ffn_dim=64, max_len=48, seed=5)


@pytest.fixture(scope="session")
def hash_encoder():
    return HashingEncoder(dim=256)


def make_keyword_sentence(rng: np.random.Generator, keyword: str | None, length: int = 9) -> str:
    words = [FILLERS[i] for i in rng.integers(len(FILLERS), size=length)]
    if keyword is not None:
        words.insert(int(rng.integers(len(words) + 1)), keyword)
    return " ".join(words)


def make_binary_arguments(n: int = 200, seed: int = 7) -> list[Argument]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        label = "fallacious" if i % 2 == 0 else "not_fallacious"
        out.append(
            Argument(
                id=f"a{i}",
                text=make_keyword_sentence(rng, KEYWORDS[label]),
                binary_label=label,
            )
        )
    return out


@pytest.fixture(scope="session")
def binary_splits():
    return stratified_split(make_binary_arguments(), (0.8, 0.1, 0.1), seed=3, granularity="binary")


COARSE_KEYWORDS = {
    "Fallacy of Ambiguity": "muddled",
    "Fallacy of Defective Induction": "hasty",
    "Fallacy of Presumption": "assumed",
    "Fallacy of Relevance": "beside",
}


def make_coarse_arguments(n_per_class: int = 40, seed: int = 9) -> list[Argument]:
    rng = np.random.default_rng(seed)
    out = []
    i = 0
    for label, keyword in sorted(COARSE_KEYWORDS.items()):
        for _ in range(n_per_class):
            out.append(
                Argument(
                    id=f"c{i}",
                    text=make_keyword_sentence(rng, keyword),
                    coarse_label=label,
                )
            )
            i += 1
    return out


@pytest.fixture(scope="session")
def coarse_splits():
    return stratified_split(make_coarse_arguments(), (0.8, 0.1, 0.1), seed=4, granularity="coarse")


@pytest.fixture(scope="session")
def synonym_table():
    """Every filler maps to spelled variants absent from the filler pool."""
    table = {w: [w + "y", w + "ish", w + "like"] for w in FILLERS}
    table["news"] = ["data", "information"]
    return TableCandidates(table)
