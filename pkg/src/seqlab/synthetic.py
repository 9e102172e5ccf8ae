"""Deterministic synthetic corpora for experiments and self-checks.

``make_synthetic_corpus`` builds a small clinical-note-shaped corpus whose
entity tokens are drawn from class-specific vocabularies, so a tagger with
content-addressed word vectors can overfit it quickly.  ``random_corpus``
and ``random_tag_sequence`` produce structurally valid but otherwise
arbitrary corpora for property tests.
"""

from __future__ import annotations

import numpy as np

from .corpus import Sentence, TaggedCorpus

_FILLERS = (
    "the", "was", "noted", "on", "exam", "today", "without", "overnight",
    "admitted", "stable", "reports", "denies", "with", "and", "continued",
    "daily", "monitor", "repeat", "review", "followup", "since", "morning",
)

_ENTITY_POOLS = (
    ("dyspnea", "edema", "sepsis", "anemia", "nausea", "fatigue", "hypoxia",
     "vertigo", "rash", "fevers", "migraine", "delirium"),
    ("lisinopril", "heparin", "insulin", "ativan", "morphine", "zofran",
     "aspirin", "lasix", "coumadin", "tylenol", "prednisone", "amoxicillin"),
    ("echocardiogram", "cbc", "ekg", "mri", "xray", "ultrasound", "biopsy",
     "cultures", "panel", "troponin", "lactate", "creatinine"),
)

_SPAN_LENGTHS = (1, 2, 3, 4)
_SPAN_WEIGHTS = (0.4, 0.3, 0.2, 0.1)


def make_synthetic_corpus(
    n_sentences: int = 60,
    seed: int = 1234,
    label_set: tuple[str, ...] = ("problem", "treatment", "test"),
) -> TaggedCorpus:
    """A learnable toy corpus: entities use class-specific vocabularies.

    Each sentence interleaves filler words with one or two entities whose
    lengths follow the short-span-heavy distribution typical of clinical
    mentions (mostly 1-3 tokens).  Deterministic in (n_sentences, seed,
    label_set).
    """
    rng = np.random.default_rng(seed)
    sentences = []
    for _ in range(n_sentences):
        tokens: list[str] = []
        tags: list[str] = []

        def fill(k: int) -> None:
            for _ in range(k):
                tokens.append(str(rng.choice(_FILLERS)))
                tags.append("O")

        n_entities = int(rng.integers(1, 3))
        fill(int(rng.integers(1, 4)))
        for _ in range(n_entities):
            cls_idx = int(rng.integers(0, len(label_set)))
            pool = _ENTITY_POOLS[cls_idx % len(_ENTITY_POOLS)]
            length = int(rng.choice(_SPAN_LENGTHS, p=_SPAN_WEIGHTS))
            words = rng.choice(pool, size=length, replace=False)
            tokens.append(str(words[0]))
            tags.append(f"B-{label_set[cls_idx]}")
            for w in words[1:]:
                tokens.append(str(w))
                tags.append(f"I-{label_set[cls_idx]}")
            fill(int(rng.integers(1, 4)))
        sentences.append(Sentence(tuple(tokens), tuple(tags)))
    return TaggedCorpus(tuple(sentences), label_set)


def random_tag_sequence(
    rng: np.random.Generator,
    length: int,
    classes: tuple[str, ...],
    entity_prob: float = 0.35,
) -> tuple[str, ...]:
    """A structurally valid IOB tag sequence of ``length`` tokens."""
    tags: list[str] = []
    i = 0
    while i < length:
        if classes and rng.random() < entity_prob:
            cls = str(rng.choice(classes))
            span = min(int(rng.integers(1, 5)), length - i)
            tags.append(f"B-{cls}")
            tags.extend([f"I-{cls}"] * (span - 1))
            i += span
        else:
            tags.append("O")
            i += 1
    return tuple(tags)


_WORD_SHAPES = (
    lambda rng, w: w,
    lambda rng, w: w.capitalize(),
    lambda rng, w: w.upper(),
    lambda rng, w: w + str(rng.integers(0, 100)),
    lambda rng, w: str(rng.integers(1, 999)),
    lambda rng, w: f"{rng.integers(1, 99)}.{rng.integers(0, 9)}",
    lambda rng, w: w + "'s",
)


def random_corpus(
    rng: np.random.Generator,
    n_sentences: int | None = None,
    classes: tuple[str, ...] = ("problem", "treatment", "test"),
    max_sentence_len: int = 12,
) -> TaggedCorpus:
    """A random corpus with valid IOB tags and varied token shapes.

    The label set is the classes in order of first appearance, which makes
    the corpus a fixed point of CoNLL round-tripping.
    """
    vocab = (
        "fever", "cough", "lasix", "aspirin", "scan", "panel", "left", "right",
        "chest", "acute", "mild", "daily", "exam", "note", "plan", "onset",
    )
    if n_sentences is None:
        n_sentences = int(rng.integers(1, 8))
    sentences = []
    for _ in range(n_sentences):
        length = int(rng.integers(1, max_sentence_len + 1))
        tokens = []
        for _ in range(length):
            shape = _WORD_SHAPES[int(rng.integers(0, len(_WORD_SHAPES)))]
            tokens.append(shape(rng, str(rng.choice(vocab))))
        tags = random_tag_sequence(rng, length, classes)
        sentences.append(Sentence(tuple(tokens), tags))
    seen: list[str] = []
    for sent in sentences:
        for tag in sent.tags:
            if tag != "O" and tag[2:] not in seen:
                seen.append(tag[2:])
    return TaggedCorpus(tuple(sentences), tuple(seen))
