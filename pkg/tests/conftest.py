"""Shared fixtures: small corpora and word-list configs used across modules."""

from __future__ import annotations

import pytest

from seqlab.corpus import Sentence, TaggedCorpus
from seqlab.relabel import build_relabel_config

# The two boundary-shift reference sentences used throughout the suite.
SHIFT_ROW_1 = Sentence(
    ("a", "bacterial", "superinfection"),
    ("B-problem", "I-problem", "I-problem"),
)
SHIFT_ROW_2 = Sentence(
    ("the", "patient", "'s", "home", "regimen"),
    ("O", "B-treatment", "I-treatment", "I-treatment", "I-treatment"),
)


@pytest.fixture
def shift_pair_corpus() -> TaggedCorpus:
    return TaggedCorpus((SHIFT_ROW_1, SHIFT_ROW_2), ("problem", "treatment"))


@pytest.fixture
def basic_relabel_config():
    return build_relabel_config(
        ["a", "the", "of", "'s"], ["patient", "patients"], ["CBC"]
    )
