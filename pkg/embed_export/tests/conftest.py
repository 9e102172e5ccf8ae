"""Shared fixtures: a tiny local BERT checkpoint and a toy corpus file.

The checkpoint is randomly initialized (never downloaded) with the
handcrafted WordPiece vocabulary from toy_data, so sub-token alignment
paths run deterministically on CPU.
"""

from __future__ import annotations

import pytest
import torch

from toy_data import TOY_CONLL, VOCAB


@pytest.fixture(autouse=True, scope="session")
def _quiet_transformers():
    import transformers.utils.logging as hf_logging

    hf_logging.set_verbosity_error()
    hf_logging.disable_progress_bar()


@pytest.fixture(scope="session")
def base_checkpoint(tmp_path_factory, _quiet_transformers) -> str:
    from transformers import BertConfig, BertModel, BertTokenizerFast

    tmp = tmp_path_factory.mktemp("base_model")
    vocab_file = tmp / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n", encoding="utf-8")
    tokenizer = BertTokenizerFast(str(vocab_file), do_lower_case=True)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=64,
    )
    torch.manual_seed(1234)
    model = BertModel(config)
    ckpt = tmp / "ckpt"
    model.save_pretrained(str(ckpt))
    tokenizer.save_pretrained(str(ckpt))
    return str(ckpt)


@pytest.fixture()
def toy_corpus_file(tmp_path) -> str:
    path = tmp_path / "toy.conll"
    path.write_text(TOY_CONLL, encoding="utf-8")
    return str(path)
