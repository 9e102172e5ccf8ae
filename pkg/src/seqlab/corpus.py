"""Tagged-corpus data model: CoNLL I/O, IOB span algebra, i2b2 ingestion, stats.

Tags follow the IOB2 convention: ``O``, ``B-<class>``, ``I-<class>``.  An
``I-<class>`` token is only valid immediately after a ``B-<class>`` or
``I-<class>`` token of the same class.  Tag strings are case-sensitive.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

DEFAULT_LABELS = ("problem", "treatment", "test")

_TAG_RE = re.compile(r"^(?:O|[BI]-\S+)$")
_CONCEPT_RE = re.compile(
    r'^c="(.*)" (\d+):(\d+) (\d+):(\d+)\|\|t="([^"]*)"\s*$'
)


class ParseError(Exception):
    """Raised when an input file violates its format."""


@dataclass(frozen=True)
class EntitySpan:
    """Inclusive token span of one entity mention.

    ``start`` and ``end`` are 0-based token indices into the sentence at
    ``sentence_index``; ``end`` is inclusive, so a single-token entity has
    ``start == end``.
    """

    label: str
    sentence_index: int
    start: int
    end: int

    def __post_init__(self) -> None:
        if not self.label:
            raise ValueError("entity label must be non-empty")
        if self.sentence_index < 0:
            raise ValueError(f"sentence_index must be >= 0, got {self.sentence_index}")
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"bad span bounds start={self.start} end={self.end}")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class Sentence:
    """One tokenized sentence with one tag per token."""

    tokens: tuple[str, ...]
    tags: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.tokens:
            # An empty sentence cannot be represented in CoNLL text.
            raise ValueError("sentence must contain at least one token")
        if len(self.tokens) != len(self.tags):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.tags)} tags"
            )
        for tok in self.tokens:
            if not tok or any(ch.isspace() for ch in tok):
                raise ValueError(f"token must be non-empty and whitespace-free: {tok!r}")
        for tag in self.tags:
            if not _TAG_RE.match(tag):
                raise ValueError(f"malformed tag {tag!r}")

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class TaggedCorpus:
    """An ordered collection of sentences plus the entity classes in play.

    ``label_set`` is ordered; every B-/I- tag in the corpus must use one of
    its classes.
    """

    sentences: tuple[Sentence, ...]
    label_set: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(set(self.label_set)) != len(self.label_set):
            raise ValueError(f"duplicate classes in label_set {self.label_set}")
        allowed = set(self.label_set)
        for i, sent in enumerate(self.sentences):
            for tag in sent.tags:
                if tag != "O" and tag[2:] not in allowed:
                    raise ValueError(
                        f"sentence {i}: tag {tag!r} uses a class outside {self.label_set}"
                    )

    def __len__(self) -> int:
        return len(self.sentences)

    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)


@dataclass(frozen=True)
class IobViolation:
    """One IOB validity breach at ``index`` within a tag sequence."""

    index: int
    tag: str
    reason: str


@dataclass(frozen=True)
class CorpusStats:
    """Corpus summary: tag percentages, entity counts, span-length histogram."""

    tag_distribution: dict[str, float] = field(default_factory=dict)
    entity_counts: dict[str, int] = field(default_factory=dict)
    length_histogram: dict[int, int] = field(default_factory=dict)


def iob_tags(label_set: Sequence[str]) -> tuple[str, ...]:
    """Full tag vocabulary for ``label_set``: O first, then B-x, I-x per class."""
    tags = ["O"]
    for cls in label_set:
        tags.append(f"B-{cls}")
        tags.append(f"I-{cls}")
    return tuple(tags)


def validate_iob(tags: Sequence[str]) -> list[IobViolation]:
    """Check the I-after-B/I-of-same-class rule.

    Returns one violation per offending position; an empty list means the
    sequence is valid IOB2.  Tag shape itself (O / B-x / I-x) is assumed.
    """
    violations = []
    prev = "O"
    for i, tag in enumerate(tags):
        if tag.startswith("I-"):
            cls = tag[2:]
            if prev not in (f"B-{cls}", f"I-{cls}"):
                violations.append(
                    IobViolation(i, tag, f"I-{cls} not preceded by B-{cls} or I-{cls}")
                )
        prev = tag
    return violations


def iob_to_spans(tags: Sequence[str], sentence_index: int = 0) -> list[EntitySpan]:
    """Decode a valid IOB tag sequence into entity spans, left to right.

    Raises ValueError if the sequence violates IOB validity.
    """
    bad = validate_iob(tags)
    if bad:
        first = bad[0]
        raise ValueError(
            f"invalid IOB at index {first.index} ({first.tag}): {first.reason}"
        )
    spans: list[EntitySpan] = []
    start = None
    cls = None
    for i, tag in enumerate(tags):
        if tag.startswith("B-"):
            if start is not None:
                spans.append(EntitySpan(cls, sentence_index, start, i - 1))
            start, cls = i, tag[2:]
        elif tag == "O":
            if start is not None:
                spans.append(EntitySpan(cls, sentence_index, start, i - 1))
            start, cls = None, None
        # I- continues the open span
    if start is not None:
        spans.append(EntitySpan(cls, sentence_index, start, len(tags) - 1))
    return spans


def spans_to_iob(sentence_length: int, spans: Iterable[EntitySpan]) -> tuple[str, ...]:
    """Encode non-overlapping entity spans as an IOB tag sequence."""
    tags = ["O"] * sentence_length
    occupied = [False] * sentence_length
    for span in sorted(spans, key=lambda s: s.start):
        if span.end >= sentence_length:
            raise ValueError(
                f"span {span.label} [{span.start},{span.end}] exceeds sentence "
                f"length {sentence_length}"
            )
        if any(occupied[span.start : span.end + 1]):
            raise ValueError(
                f"span {span.label} [{span.start},{span.end}] overlaps another span"
            )
        for i in range(span.start, span.end + 1):
            occupied[i] = True
        tags[span.start] = f"B-{span.label}"
        for i in range(span.start + 1, span.end + 1):
            tags[i] = f"I-{span.label}"
    return tuple(tags)


def parse_conll(text: str, label_set: Sequence[str] | None = None) -> TaggedCorpus:
    """Parse two-column CoNLL text (token TAB tag, blank line between sentences).

    When ``label_set`` is omitted it is inferred from the tags in order of
    first appearance.  Raises ParseError with a line number on malformed
    lines or unknown tag shapes; IOB validity is NOT enforced here.
    """
    sentences: list[Sentence] = []
    tokens: list[str] = []
    tags: list[str] = []
    seen: list[str] = []
    allowed = None if label_set is None else set(label_set)

    def flush() -> None:
        if tokens:
            sentences.append(Sentence(tuple(tokens), tuple(tags)))
            tokens.clear()
            tags.clear()

    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            flush()
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0] or not fields[1]:
            raise ParseError(f"line {lineno}: expected 'token<TAB>tag', got {line!r}")
        token, tag = fields
        if any(ch.isspace() for ch in token):
            raise ParseError(f"line {lineno}: token contains whitespace: {token!r}")
        if not _TAG_RE.match(tag):
            raise ParseError(f"line {lineno}: malformed tag {tag!r}")
        if tag != "O":
            if allowed is not None and tag[2:] not in allowed:
                raise ParseError(
                    f"line {lineno}: tag {tag!r} uses a class outside {tuple(label_set)}"
                )
            if tag[2:] not in seen:
                seen.append(tag[2:])
        tokens.append(token)
        tags.append(tag)
    flush()

    if label_set is None:
        label_set = tuple(seen)
    return TaggedCorpus(tuple(sentences), tuple(label_set))


def write_conll(corpus: TaggedCorpus) -> str:
    """Render a corpus as CoNLL text; inverse of :func:`parse_conll`.

    Each sentence block is followed by one blank line.  An empty corpus
    renders as empty text.
    """
    parts = []
    for sent in corpus.sentences:
        lines = [f"{tok}\t{tag}" for tok, tag in zip(sent.tokens, sent.tags)]
        parts.append("\n".join(lines) + "\n\n")
    return "".join(parts)


@dataclass(frozen=True)
class I2b2Document:
    """Result of pairing a clinical report with its concept annotations.

    ``sentences`` holds one token list per report line (empty lines kept so
    that line numbers stay aligned); ``warnings`` collects non-fatal
    text-mismatch diagnostics.
    """

    sentences: tuple[tuple[str, ...], ...]
    spans: tuple[EntitySpan, ...]
    warnings: tuple[str, ...]


def parse_i2b2(report_text: str, concept_lines: str) -> I2b2Document:
    """Convert an i2b2-style report + concept file into sentences and spans.

    The report is tokenized one sentence per line by whitespace.  Concept
    lines look like::

        c="<text>" <line>:<tok> <line>:<tok>||t="<class>"

    with 1-based line numbers and 0-based token offsets.  Out-of-range
    references raise ParseError naming the concept line; a mismatch between
    the quoted text and the referenced tokens (compared lowercased) is
    collected as a warning instead.
    """
    sentences = tuple(tuple(line.split()) for line in report_text.splitlines())
    spans: list[EntitySpan] = []
    warnings: list[str] = []
    for lineno, raw in enumerate(concept_lines.splitlines(), start=1):
        if not raw.strip():
            continue
        m = _CONCEPT_RE.match(raw)
        if m is None:
            raise ParseError(f"concept line {lineno}: cannot parse {raw!r}")
        text, l1, t1, l2, t2, cls = m.groups()
        l1, t1, l2, t2 = int(l1), int(t1), int(l2), int(t2)
        if l1 != l2:
            raise ParseError(
                f"concept line {lineno}: spans lines {l1} and {l2}, expected one line"
            )
        if not 1 <= l1 <= len(sentences):
            raise ParseError(
                f"concept line {lineno}: line {l1} outside report (1..{len(sentences)})"
            )
        sent = sentences[l1 - 1]
        if not (0 <= t1 <= t2 < len(sent)):
            raise ParseError(
                f"concept line {lineno}: tokens {t1}:{t2} outside line {l1} "
                f"(0..{len(sent) - 1})"
            )
        referenced = " ".join(sent[t1 : t2 + 1])
        if referenced.lower() != text.lower():
            warnings.append(
                f"concept line {lineno}: text {text!r} != report tokens {referenced!r}"
            )
        spans.append(EntitySpan(cls, l1 - 1, t1, t2))
    return I2b2Document(sentences, tuple(spans), tuple(warnings))


def corpus_stats(corpus: TaggedCorpus) -> CorpusStats:
    """Tag percentage distribution, per-class entity counts, span-length histogram.

    Percentages cover tags that actually occur and sum to 100 (empty corpus
    gives empty dicts).
    """
    tag_counts: dict[str, int] = {}
    entity_counts: dict[str, int] = {}
    length_histogram: dict[int, int] = {}
    total = 0
    for i, sent in enumerate(corpus.sentences):
        for tag in sent.tags:
            tag_counts[tag] = tag_counts.get(tag, 0) + 1
            total += 1
        for span in iob_to_spans(sent.tags, i):
            entity_counts[span.label] = entity_counts.get(span.label, 0) + 1
            length_histogram[span.length] = length_histogram.get(span.length, 0) + 1
    distribution = {tag: 100.0 * n / total for tag, n in tag_counts.items()}
    return CorpusStats(distribution, entity_counts, length_histogram)
