"""Token-classification fine-tuning with a plain training loop.

The loop is written out rather than delegated to a trainer framework:
seeded epoch shuffles, first-sub-token label alignment with ignored
continuations, one optimizer step per batch, and a per-epoch mean-loss log.
Two runs with the same config, corpus, and seed record identical loss
sequences on a fixed CPU build.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Sequence

import torch

from .config import FinetuneConfig
from .conll import ConllSentence, tag_inventory

# Positions carrying this label are excluded from the loss: special
# markers, padding, and continuation sub-tokens.
IGNORE_INDEX = -100

TRAINING_LOG = "training_log.json"


class CheckpointError(Exception):
    """Raised when a model identifier or checkpoint cannot be loaded."""


def _load_pretrained(model_id: str, labels: Sequence[str] | None):
    """(model, tokenizer) for ``model_id``; a label list adds a fresh head."""
    from transformers import (
        AutoModel,
        AutoModelForTokenClassification,
        AutoTokenizer,
    )

    try:
        if labels is None:
            model = AutoModel.from_pretrained(model_id)
        else:
            model = AutoModelForTokenClassification.from_pretrained(
                model_id,
                num_labels=len(labels),
                id2label=dict(enumerate(labels)),
                label2id={tag: i for i, tag in enumerate(labels)},
            )
        tokenizer = AutoTokenizer.from_pretrained(model_id)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot load {model_id!r}: {exc}") from None
    if not tokenizer.is_fast:
        raise CheckpointError(
            f"{model_id!r} has no fast tokenizer; sub-token alignment needs one"
        )
    return model, tokenizer


def load_for_export(model_id: str):
    """Encoder and tokenizer for embedding export; no classification head."""
    model, tokenizer = _load_pretrained(model_id, None)
    model.eval()
    return model, tokenizer


def encode_batch(
    tokenizer,
    batch: Sequence[ConllSentence],
    label2id: dict[str, int],
    max_sequence_length: int,
):
    """Tokenize a batch and align labels to first sub-tokens.

    Continuation sub-tokens, special markers, and padding get IGNORE_INDEX.
    Sentences longer than ``max_sequence_length`` sub-tokens are truncated;
    training tolerates truncation, export does not.
    """
    encoding = tokenizer(
        [list(sent.tokens) for sent in batch],
        is_split_into_words=True,
        truncation=True,
        max_length=max_sequence_length,
        padding=True,
        return_tensors="pt",
    )
    labels = torch.full(
        encoding["input_ids"].shape, IGNORE_INDEX, dtype=torch.long
    )
    for row, sent in enumerate(batch):
        previous = None
        for pos, word_id in enumerate(encoding.word_ids(row)):
            if word_id is None or word_id == previous:
                continue
            labels[row, pos] = label2id[sent.tags[word_id]]
            previous = word_id
    return encoding, labels


@dataclass
class FinetuneResult:
    model: object
    tokenizer: object
    labels: list[str]
    epoch_losses: list[float]


def finetune(
    config: FinetuneConfig,
    sentences: Sequence[ConllSentence],
    seed: int = 0,
) -> FinetuneResult:
    """Fine-tune the pretrained model on IOB-tagged sentences.

    The seed drives both the fresh classification head and the epoch
    shuffles, so the recorded loss sequence is reproducible.
    """
    if not sentences:
        raise ValueError("training corpus is empty")
    labels = tag_inventory(sentences)
    label2id = {tag: i for i, tag in enumerate(labels)}
    torch.manual_seed(seed)
    model, tokenizer = _load_pretrained(config.model, labels)
    model.train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
    generator = torch.Generator().manual_seed(seed)
    epoch_losses: list[float] = []
    for _ in range(config.epochs):
        order = torch.randperm(len(sentences), generator=generator).tolist()
        total = 0.0
        batches = 0
        for at in range(0, len(order), config.batch_size):
            batch = [sentences[i] for i in order[at : at + config.batch_size]]
            encoding, batch_labels = encode_batch(
                tokenizer, batch, label2id, config.max_sequence_length
            )
            out = model(**encoding, labels=batch_labels)
            out.loss.backward()
            optimizer.step()
            optimizer.zero_grad()
            total += float(out.loss.detach())
            batches += 1
        epoch_losses.append(total / batches)
    model.eval()
    return FinetuneResult(model, tokenizer, labels, epoch_losses)


def save_checkpoint(result: FinetuneResult, path: str) -> None:
    """Write model, tokenizer, and the loss log under ``path``."""
    result.model.save_pretrained(path)
    result.tokenizer.save_pretrained(path)
    log = {"labels": result.labels, "epoch_losses": result.epoch_losses}
    with open(os.path.join(path, TRAINING_LOG), "w", encoding="utf-8") as f:
        json.dump(log, f, indent=2)
        f.write("\n")
