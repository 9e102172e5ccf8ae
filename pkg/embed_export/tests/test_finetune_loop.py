"""Training-loop behavior: smoke run, loss log, determinism, errors."""

from __future__ import annotations

import json
import os

import pytest
import torch

from embed_export import (
    CheckpointError,
    ConllError,
    ConllSentence,
    FinetuneConfig,
    encode_batch,
    finetune,
    load_for_export,
    read_conll,
    save_checkpoint,
    tag_inventory,
)
from embed_export.finetune import IGNORE_INDEX

from toy_data import TOY_CONLL


def test_read_conll_and_inventory():
    sentences = read_conll(TOY_CONLL)
    assert len(sentences) == 5
    assert sentences[0].tokens == ("the", "fever", "pains", "daily")
    assert sentences[0].tags == ("O", "B-problem", "I-problem", "O")
    assert tag_inventory(sentences) == [
        "O", "B-problem", "I-problem", "B-treatment", "B-test", "I-test",
    ]


def test_read_conll_rejects_malformed():
    with pytest.raises(ConllError, match="line 2"):
        read_conll("fever\tO\nbroken line\n")
    with pytest.raises(ConllError, match="no sentences"):
        read_conll("\n\n")
    with pytest.raises(ConllError, match="at least one token"):
        ConllSentence((), ())


def test_config_validation():
    with pytest.raises(ValueError, match="model"):
        FinetuneConfig(model="")
    with pytest.raises(ValueError, match="batch_size"):
        FinetuneConfig(model="m", batch_size=0)
    with pytest.raises(ValueError, match="learning_rate"):
        FinetuneConfig(model="m", learning_rate=0.0)
    with pytest.raises(ValueError, match="epochs"):
        FinetuneConfig(model="m", epochs=0)
    with pytest.raises(ValueError, match="max_sequence_length"):
        FinetuneConfig(model="m", max_sequence_length=2)


def test_encode_batch_first_subtoken_alignment(base_checkpoint):
    _, tokenizer = load_for_export(base_checkpoint)
    sentences = read_conll(TOY_CONLL)
    label2id = {tag: i for i, tag in enumerate(tag_inventory(sentences))}
    encoding, labels = encode_batch(tokenizer, sentences[:1], label2id, 200)
    # [CLS] the fever pain ##s daily [SEP]: continuation and specials ignored.
    word_ids = encoding.word_ids(0)
    assert word_ids == [None, 0, 1, 2, 2, 3, None]
    assert labels[0].tolist() == [
        IGNORE_INDEX,
        label2id["O"],
        label2id["B-problem"],
        label2id["I-problem"],
        IGNORE_INDEX,
        label2id["O"],
        IGNORE_INDEX,
    ]


def test_finetune_smoke_saves_checkpoint(base_checkpoint, tmp_path):
    sentences = read_conll(TOY_CONLL)
    config = FinetuneConfig(model=base_checkpoint, batch_size=2, epochs=1)
    result = finetune(config, sentences, seed=0)
    assert len(result.epoch_losses) == 1
    assert all(map(torch.isfinite, map(torch.tensor, result.epoch_losses)))

    out = tmp_path / "tuned"
    save_checkpoint(result, str(out))
    names = set(os.listdir(out))
    assert "model.safetensors" in names
    assert "training_log.json" in names
    log = json.loads((out / "training_log.json").read_text(encoding="utf-8"))
    assert log["epoch_losses"] == result.epoch_losses
    assert log["labels"] == tag_inventory(sentences)
    # The saved checkpoint is loadable for export.
    model, tokenizer = load_for_export(str(out))
    assert model.config.hidden_size == 32
    assert tokenizer.is_fast


def test_finetune_logs_one_loss_per_epoch(base_checkpoint):
    sentences = read_conll(TOY_CONLL)
    config = FinetuneConfig(model=base_checkpoint, batch_size=2, epochs=2)
    result = finetune(config, sentences, seed=1)
    assert len(result.epoch_losses) == 2


def test_finetune_fixed_seed_reproduces_losses(base_checkpoint):
    sentences = read_conll(TOY_CONLL)
    config = FinetuneConfig(model=base_checkpoint, batch_size=2, epochs=2)
    first = finetune(config, sentences, seed=0)
    second = finetune(config, sentences, seed=0)
    assert first.epoch_losses == second.epoch_losses


def test_finetune_rejects_empty_corpus(base_checkpoint):
    config = FinetuneConfig(model=base_checkpoint)
    with pytest.raises(ValueError, match="empty"):
        finetune(config, [], seed=0)


def test_unresolvable_model_identifier():
    with pytest.raises(CheckpointError, match="no-such-checkpoint"):
        load_for_export("/no-such-checkpoint")
