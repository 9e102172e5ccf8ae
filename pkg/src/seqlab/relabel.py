"""Boundary-tightening relabeler for IOB corpora.

Multi-token entities frequently begin with determiners, possessives, or
corpus-frequent words ("the", "'s", "patient") that carry no entity content.
The relabeler shifts the B- tag rightward past such prefixes, one token at a
time, turning each skipped token into O.  A whitelisted abbreviation is never
treated as a skippable prefix, and an entity is never reduced below one token.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

from .corpus import Sentence, TaggedCorpus, iob_to_spans


@dataclass(frozen=True)
class RelabelConfig:
    """Word lists steering the relabeler.

    ``stopwords`` and ``frequent_words`` hold lowercase entries and are
    matched against lowercased tokens; ``abbreviation_whitelist`` is matched
    case-sensitively against raw tokens.  The lowercase image of the
    whitelist must not intersect the other two sets, so a whitelisted
    surface form can never be flagged as a skippable prefix.
    """

    stopwords: frozenset[str]
    frequent_words: frozenset[str]
    abbreviation_whitelist: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        for name, entries in (
            ("stopwords", self.stopwords),
            ("frequent_words", self.frequent_words),
            ("abbreviation_whitelist", self.abbreviation_whitelist),
        ):
            for entry in entries:
                if not entry:
                    raise ValueError(f"{name} contains an empty entry")
        for name, entries in (
            ("stopwords", self.stopwords),
            ("frequent_words", self.frequent_words),
        ):
            for entry in entries:
                if entry != entry.lower():
                    raise ValueError(f"{name} entry {entry!r} is not lowercase")
        lowered = {w.lower() for w in self.abbreviation_whitelist}
        clash = lowered & (self.stopwords | self.frequent_words)
        if clash:
            raise ValueError(
                f"whitelist collides with stopword/frequent lists (lowercased): "
                f"{sorted(clash)}"
            )

    def flags_prefix(self, token: str) -> bool:
        """True when ``token`` may be stripped from the front of an entity."""
        if token in self.abbreviation_whitelist:
            return False
        low = token.lower()
        return low in self.stopwords or low in self.frequent_words


@dataclass(frozen=True)
class RelabelSummary:
    """Flip counts from one relabeling pass.

    Each single-token shift flips one B to O and promotes the next I to B,
    so ``b_to_o`` and ``i_to_b`` agree per class; an entity shifted twice
    contributes twice.
    """

    b_to_o: dict[str, int] = field(default_factory=dict)
    i_to_b: dict[str, int] = field(default_factory=dict)
    entities_shifted: int = 0

    def total_shifts(self) -> int:
        return sum(self.b_to_o.values())


def load_word_list(path: str) -> list[str]:
    """Read a word-list file: UTF-8, one entry per line, '#' lines are comments."""
    entries = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            entries.append(line)
    return entries


def _packaged_list(name: str) -> list[str]:
    text = resources.files("seqlab.data").joinpath(name).read_text(encoding="utf-8")
    return [
        line.strip()
        for line in text.splitlines()
        if line.strip() and not line.strip().startswith("#")
    ]


def build_relabel_config(
    stopwords: Sequence[str],
    frequent_words: Sequence[str],
    abbreviations: Sequence[str],
) -> RelabelConfig:
    """Assemble a config from raw lists.

    Stopword and frequent-word entries are lowercased; any entry whose
    lowercase form matches a whitelisted abbreviation is dropped, which keeps
    the abbreviation exempt while establishing the disjointness invariant.
    """
    whitelist = frozenset(abbreviations)
    lowered_whitelist = {w.lower() for w in whitelist}
    stop = frozenset(w.lower() for w in stopwords) - lowered_whitelist
    freq = frozenset(w.lower() for w in frequent_words) - lowered_whitelist
    return RelabelConfig(stop, freq, whitelist)


def default_relabel_config() -> RelabelConfig:
    """Config built from the packaged stopword/frequent/abbreviation lists."""
    return build_relabel_config(
        _packaged_list("stopwords.txt"),
        _packaged_list("frequent_words.txt"),
        _packaged_list("abbreviations.txt"),
    )


def relabel_sentence(
    tokens: Sequence[str], tags: Sequence[str], config: RelabelConfig
) -> tuple[tuple[str, ...], int]:
    """Shift entity starts past skippable prefix tokens.

    For every entity, while it still has at least two tokens and its first
    token is a stopword or frequent word (lowercased) and not a whitelisted
    abbreviation, the first token becomes O and the next token becomes the
    new B.  Returns the new tags and the number of shifts applied.  The tag
    sequence must be valid IOB.
    """
    if len(tokens) != len(tags):
        raise ValueError(f"{len(tokens)} tokens but {len(tags)} tags")
    new_tags = list(tags)
    shifts = 0
    for span in iob_to_spans(tags):
        start, end = span.start, span.end
        while end - start >= 1 and config.flags_prefix(tokens[start]):
            new_tags[start] = "O"
            new_tags[start + 1] = f"B-{span.label}"
            start += 1
            shifts += 1
    return tuple(new_tags), shifts


def relabel_corpus(
    corpus: TaggedCorpus, config: RelabelConfig
) -> tuple[TaggedCorpus, RelabelSummary]:
    """Apply :func:`relabel_sentence` to every sentence and tally the flips.

    Entity counts per class are preserved; only boundaries move.  The pass
    is idempotent: a second application changes nothing.
    """
    b_to_o: dict[str, int] = {}
    i_to_b: dict[str, int] = {}
    entities_shifted = 0
    new_sentences = []
    for sent in corpus.sentences:
        new_tags = list(sent.tags)
        for span in iob_to_spans(sent.tags):
            start, end = span.start, span.end
            moved = False
            while end - start >= 1 and config.flags_prefix(sent.tokens[start]):
                new_tags[start] = "O"
                new_tags[start + 1] = f"B-{span.label}"
                start += 1
                moved = True
                b_to_o[span.label] = b_to_o.get(span.label, 0) + 1
                i_to_b[span.label] = i_to_b.get(span.label, 0) + 1
            if moved:
                entities_shifted += 1
        new_sentences.append(Sentence(sent.tokens, tuple(new_tags)))
    summary = RelabelSummary(b_to_o, i_to_b, entities_shifted)
    return TaggedCorpus(tuple(new_sentences), corpus.label_set), summary
