"""Minimal CoNLL reader for token-classification corpora.

One ``token<TAB>tag`` line per token, blank line between sentences.  The
file format is the interchange contract with downstream consumers, so this
reader stays deliberately free of any consumer-package dependency.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


class ConllError(Exception):
    """Raised when CoNLL text is structurally invalid."""


@dataclass(frozen=True)
class ConllSentence:
    tokens: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            raise ConllError("sentence must contain at least one token")
        if len(self.tokens) != len(self.tags):
            raise ConllError(
                f"{len(self.tokens)} tokens but {len(self.tags)} tags"
            )


def read_conll(text: str) -> list[ConllSentence]:
    sentences: list[ConllSentence] = []
    tokens: list[str] = []
    tags: list[str] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            if tokens:
                sentences.append(ConllSentence(tuple(tokens), tuple(tags)))
                tokens, tags = [], []
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0] or not fields[1]:
            raise ConllError(
                f"line {lineno}: expected 'token<TAB>tag', got {line!r}"
            )
        tokens.append(fields[0])
        tags.append(fields[1])
    if tokens:
        sentences.append(ConllSentence(tuple(tokens), tuple(tags)))
    if not sentences:
        raise ConllError("no sentences found")
    return sentences


def load_conll(path: str) -> list[ConllSentence]:
    with open(path, encoding="utf-8") as handle:
        return read_conll(handle.read())


def tag_inventory(sentences: Sequence[ConllSentence]) -> list[str]:
    """Distinct tags in first-appearance order; fixes the label-id mapping."""
    seen: list[str] = []
    for sent in sentences:
        for tag in sent.tags:
            if tag not in seen:
                seen.append(tag)
    return seen
