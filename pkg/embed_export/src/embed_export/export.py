"""Per-token contextual vectors from a transformer's last hidden layer.

A word is represented by the arithmetic mean of its sub-token vectors in
float64; for a single-sub-token word that is the raw hidden state.  Output
is the positional embedding interchange format::

    #DIM <d>
    #SENT <sentence_id> <n_tokens>
    <d space-separated decimal floats per token line>

Sentence ids are the zero-based corpus positions.  Floats are written with
``repr`` so the file round-trips to the exact float64 values.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import torch

from .conll import ConllSentence


class ExportError(Exception):
    """Raised when a sentence cannot be exported faithfully."""


def sentence_vectors(
    model,
    tokenizer,
    tokens: Sequence[str],
    sentence_id: str,
    max_sequence_length: int,
) -> np.ndarray:
    """[n_tokens, hidden] float64 matrix of sub-token-averaged vectors."""
    encoding = tokenizer(
        list(tokens), is_split_into_words=True, return_tensors="pt"
    )
    n_sub = int(encoding["input_ids"].shape[1])
    if n_sub > max_sequence_length:
        raise ExportError(
            f"sentence {sentence_id}: {n_sub} sub-tokens exceed the "
            f"max_sequence_length of {max_sequence_length}; refusing to truncate"
        )
    with torch.no_grad():
        out = model(**encoding, output_hidden_states=True)
    last = out.hidden_states[-1][0].to(torch.float64).numpy()
    word_ids = encoding.word_ids(0)
    rows = np.zeros((len(tokens), last.shape[1]), dtype=np.float64)
    for w, token in enumerate(tokens):
        positions = [p for p, wid in enumerate(word_ids) if wid == w]
        if not positions:
            raise ExportError(
                f"sentence {sentence_id}: token {token!r} produced no sub-tokens"
            )
        rows[w] = last[positions].mean(axis=0)
    return rows


def export_embeddings(
    model,
    tokenizer,
    sentences: Sequence[ConllSentence],
    max_sequence_length: int,
) -> str:
    """Render the whole corpus as embedding-file text."""
    model.eval()
    dim = int(model.config.hidden_size)
    out = [f"#DIM {dim}"]
    for index, sent in enumerate(sentences):
        mat = sentence_vectors(
            model, tokenizer, sent.tokens, str(index), max_sequence_length
        )
        out.append(f"#SENT {index} {mat.shape[0]}")
        for row in mat:
            out.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def write_embeddings(
    model,
    tokenizer,
    sentences: Sequence[ConllSentence],
    max_sequence_length: int,
    path: str,
) -> None:
    text = export_embeddings(model, tokenizer, sentences, max_sequence_length)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)
