"""Token feature extraction: characters, writing format, word vectors.

Three per-token signals feed the tagger: a character index matrix for the
convolutional character encoder, an 8-way writing-format one-hot, and a word
vector from one of three interchangeable providers (precomputed embedding
file, deterministic hash stub, trainable lookup table).
"""

from __future__ import annotations

import hashlib
import string
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Character inventory: PAD, UNK, a-z, A-Z, 0-9, the 32 printable ASCII
# punctuation characters in code-point order, space.  97 symbols total.
PAD_INDEX = 0
UNK_INDEX = 1
_ALPHABET = (
    "abcdefghijklmnopqrstuvwxyz"
    "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    "0123456789" + string.punctuation + " "
)
CHAR_TO_INDEX = {ch: i + 2 for i, ch in enumerate(_ALPHABET)}
CHAR_VOCAB_SIZE = 2 + len(_ALPHABET)

# Writing-format categories.
ALL_UPPER = 0
INIT_CAP = 1
MIXED_CASE = 2
ALL_DIGITS = 3
DIGITS_PUNCT = 4
ALPHANUMERIC = 5
ALL_LOWER = 6
OTHER = 7
N_FORMATS = 8

_DIGITS = set("0123456789")
_PUNCT = set(string.punctuation)


class EmbeddingFormatError(Exception):
    """Raised when an embedding file violates the expected format."""


class MissingVectorError(LookupError):
    """Raised when a provider has no vector for the requested token."""


def encode_chars(word: str, max_word_len: int) -> np.ndarray:
    """Map a word to a fixed-length vector of character indices.

    Characters beyond ``max_word_len`` are dropped from the tail; shorter
    words are padded with PAD (0).  Characters outside the inventory map to
    UNK (1).
    """
    if not word:
        raise ValueError("cannot encode an empty word")
    if max_word_len < 1:
        raise ValueError(f"max_word_len must be >= 1, got {max_word_len}")
    out = np.zeros(max_word_len, dtype=np.int64)
    for i, ch in enumerate(word[:max_word_len]):
        out[i] = CHAR_TO_INDEX.get(ch, UNK_INDEX)
    return out


def writing_format(word: str) -> int:
    """Classify the orthographic shape of a word into one of 8 categories.

    Checked in order: all digits; digits with punctuation; alphanumeric
    (letters and digits, punctuation allowed); all-uppercase letters;
    initial capital; all-lowercase letters; mixed-case letters; other.
    Exactly one category fires for any non-empty word.
    """
    if not word:
        raise ValueError("cannot classify an empty word")
    is_digit = [ch in _DIGITS for ch in word]
    is_punct = [ch in _PUNCT for ch in word]
    is_letter = [ch.isalpha() for ch in word]
    if all(is_digit):
        return ALL_DIGITS
    if all(d or p for d, p in zip(is_digit, is_punct)) and any(is_digit):
        return DIGITS_PUNCT
    if (
        all(d or p or a for d, p, a in zip(is_digit, is_punct, is_letter))
        and any(is_letter)
        and any(is_digit)
    ):
        return ALPHANUMERIC
    if all(is_letter):
        if word.isupper():
            return ALL_UPPER
        if len(word) >= 2 and word[0].isupper() and word[1:].islower():
            return INIT_CAP
        if word.islower():
            return ALL_LOWER
        return MIXED_CASE
    return OTHER


def format_onehot(word: str) -> np.ndarray:
    vec = np.zeros(N_FORMATS, dtype=np.float64)
    vec[writing_format(word)] = 1.0
    return vec


class WordVectorProvider:
    """Interface for per-token word vectors.

    ``vector(sentence_index, token_index, word)`` returns a float64 array of
    length ``dim``.  File-backed providers address tokens by position; the
    hash and lookup providers address them by surface form.
    """

    dim: int
    source: str

    def vector(self, sentence_index: int, token_index: int, word: str) -> np.ndarray:
        raise NotImplementedError


class EmbeddingFileProvider(WordVectorProvider):
    """Vectors read from a precomputed embedding file, addressed by position."""

    source = "embedding-file"

    def __init__(self, dim: int, sentences: dict[str, np.ndarray]):
        self.dim = dim
        self._sentences = sentences

    def sentence_matrix(self, sentence_id: str) -> np.ndarray:
        if sentence_id not in self._sentences:
            raise MissingVectorError(f"no embeddings for sentence {sentence_id!r}")
        return self._sentences[sentence_id]

    def expect_length(self, sentence_id: str, n_tokens: int) -> None:
        """Fail loudly if the stored token count disagrees with the corpus."""
        mat = self.sentence_matrix(sentence_id)
        if mat.shape[0] != n_tokens:
            raise MissingVectorError(
                f"sentence {sentence_id!r}: embedding file has {mat.shape[0]} "
                f"token vectors but the corpus sentence has {n_tokens} tokens"
            )

    def vector(self, sentence_index: int, token_index: int, word: str) -> np.ndarray:
        mat = self.sentence_matrix(str(sentence_index))
        if not 0 <= token_index < mat.shape[0]:
            raise MissingVectorError(
                f"sentence {sentence_index}: no vector for token {token_index} "
                f"(file has {mat.shape[0]})"
            )
        return mat[token_index]


def parse_embedding_file(text: str) -> EmbeddingFileProvider:
    """Parse the per-token embedding interchange format.

    Layout::

        #DIM <d>
        #SENT <sentence_id> <n_tokens>
        <d space-separated decimal floats per token line>
        ...

    The header must come first; every #SENT block must contain exactly its
    declared number of vector lines, each of width d.  Violations raise
    EmbeddingFormatError naming the offending sentence or line.
    """
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#DIM "):
        raise EmbeddingFormatError("first line must be '#DIM <d>'")
    try:
        dim = int(lines[0][5:].strip())
    except ValueError:
        raise EmbeddingFormatError(f"bad #DIM header: {lines[0]!r}") from None
    if dim < 1:
        raise EmbeddingFormatError(f"#DIM must be >= 1, got {dim}")

    sentences: dict[str, np.ndarray] = {}
    current_id: str | None = None
    declared = 0
    rows: list[np.ndarray] = []

    def close_block() -> None:
        if current_id is None:
            return
        if len(rows) != declared:
            raise EmbeddingFormatError(
                f"sentence {current_id!r}: declared {declared} tokens, "
                f"found {len(rows)} vector lines"
            )
        sentences[current_id] = (
            np.vstack(rows) if rows else np.zeros((0, dim), dtype=np.float64)
        )

    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#SENT "):
            close_block()
            fields = line.split()
            if len(fields) != 3:
                raise EmbeddingFormatError(
                    f"line {lineno}: expected '#SENT <id> <n_tokens>', got {line!r}"
                )
            current_id = fields[1]
            if current_id in sentences:
                raise EmbeddingFormatError(
                    f"line {lineno}: duplicate sentence id {current_id!r}"
                )
            try:
                declared = int(fields[2])
            except ValueError:
                raise EmbeddingFormatError(
                    f"line {lineno}: bad token count in {line!r}"
                ) from None
            if declared < 0:
                raise EmbeddingFormatError(f"line {lineno}: negative token count")
            rows = []
            continue
        if current_id is None:
            raise EmbeddingFormatError(
                f"line {lineno}: vector line before any #SENT header"
            )
        try:
            vec = np.array([float(v) for v in line.split()], dtype=np.float64)
        except ValueError:
            raise EmbeddingFormatError(
                f"line {lineno}: cannot parse vector line {line!r}"
            ) from None
        if vec.shape[0] != dim:
            raise EmbeddingFormatError(
                f"line {lineno}: sentence {current_id!r} has a vector of length "
                f"{vec.shape[0]}, expected {dim}"
            )
        rows.append(vec)
    close_block()
    return EmbeddingFileProvider(dim, sentences)


def load_embedding_file(path: str) -> EmbeddingFileProvider:
    with open(path, encoding="utf-8") as handle:
        return parse_embedding_file(handle.read())


def write_embedding_file(
    dim: int, blocks: Sequence[tuple[str, np.ndarray]]
) -> str:
    """Render sentence matrices in the embedding interchange format."""
    out = [f"#DIM {dim}"]
    for sentence_id, mat in blocks:
        if mat.ndim != 2 or mat.shape[1] != dim:
            raise ValueError(
                f"sentence {sentence_id!r}: matrix shape {mat.shape} does not "
                f"match dim {dim}"
            )
        out.append(f"#SENT {sentence_id} {mat.shape[0]}")
        for row in mat:
            out.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def hash_embedding(word: str, dim: int, seed: int) -> np.ndarray:
    """Deterministic pseudo-vector for a word, components uniform in [-1, 1].

    The word and seed are digested with BLAKE2b and the digest seeds a PCG64
    generator, so equal (word, dim, seed) triples give bitwise-equal vectors
    on any platform and distinct words collide with negligible probability.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    digest = hashlib.blake2b(
        word.encode("utf-8"), digest_size=16, salt=str(seed).encode("utf-8")[:16]
    ).digest()
    rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
    return rng.uniform(-1.0, 1.0, dim)


class HashEmbeddingProvider(WordVectorProvider):
    """Content-addressed stand-in vectors; no training data required."""

    source = "hash-stub"

    def __init__(self, dim: int, seed: int):
        self.dim = dim
        self.seed = seed
        self._cache: dict[str, np.ndarray] = {}

    def vector(self, sentence_index: int, token_index: int, word: str) -> np.ndarray:
        if word not in self._cache:
            self._cache[word] = hash_embedding(word, self.dim, self.seed)
        return self._cache[word]


class LookupEmbeddingProvider(WordVectorProvider):
    """Trainable per-word vectors over a fixed vocabulary.

    Row 0 is the unknown-word vector.  ``table`` is owned by the model
    bundle during training so optimizer updates are visible here.
    """

    source = "trainable-lookup"
    UNK = "<unk>"

    def __init__(self, vocab: Sequence[str], table: np.ndarray):
        if table.ndim != 2 or table.shape[0] != len(vocab):
            raise ValueError(
                f"table shape {table.shape} does not match vocab size {len(vocab)}"
            )
        if vocab[0] != self.UNK:
            raise ValueError(f"vocab row 0 must be {self.UNK!r}")
        self.dim = table.shape[1]
        self.vocab = tuple(vocab)
        self.table = table
        self._index = {w: i for i, w in enumerate(vocab)}

    @classmethod
    def build(
        cls, words: Sequence[str], dim: int, rng: np.random.Generator
    ) -> "LookupEmbeddingProvider":
        vocab = (cls.UNK,) + tuple(sorted(set(words)))
        limit = np.sqrt(6.0 / (len(vocab) + dim))
        table = rng.uniform(-limit, limit, (len(vocab), dim))
        return cls(vocab, table)

    def row_index(self, word: str) -> int:
        return self._index.get(word, 0)

    def vector(self, sentence_index: int, token_index: int, word: str) -> np.ndarray:
        return self.table[self.row_index(word)]


@dataclass(frozen=True)
class SentenceFeatures:
    """Assembled per-sentence model inputs.

    ``word_vectors`` is [T, word_dim] float64, ``char_indices`` [T,
    max_word_len] int64, ``format_onehots`` [T, 8] float64, and
    ``lookup_rows`` the per-token rows into a trainable lookup table (all
    zeros for other providers).
    """

    word_vectors: np.ndarray
    char_indices: np.ndarray
    format_onehots: np.ndarray
    lookup_rows: np.ndarray


def assemble_features(
    tokens: Sequence[str],
    sentence_index: int,
    provider: WordVectorProvider,
    max_word_len: int,
) -> SentenceFeatures:
    """Stack word vectors, char index rows, and format one-hots for a sentence."""
    if not tokens:
        raise ValueError("cannot assemble features for an empty sentence")
    if isinstance(provider, EmbeddingFileProvider):
        provider.expect_length(str(sentence_index), len(tokens))
    words = np.zeros((len(tokens), provider.dim), dtype=np.float64)
    chars = np.zeros((len(tokens), max_word_len), dtype=np.int64)
    formats = np.zeros((len(tokens), N_FORMATS), dtype=np.float64)
    rows = np.zeros(len(tokens), dtype=np.int64)
    for t, word in enumerate(tokens):
        words[t] = provider.vector(sentence_index, t, word)
        chars[t] = encode_chars(word, max_word_len)
        formats[t, writing_format(word)] = 1.0
        if isinstance(provider, LookupEmbeddingProvider):
            rows[t] = provider.row_index(word)
    return SentenceFeatures(words, chars, formats, rows)
