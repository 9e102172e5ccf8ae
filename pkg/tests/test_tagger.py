"""Full tagger: config, init, forward/backward stack, training, serialization."""

from __future__ import annotations

import dataclasses

import numpy as np
import pytest

from seqlab.corpus import Sentence, TaggedCorpus, validate_iob
from seqlab.features import HashEmbeddingProvider, assemble_features
from seqlab.neural import finite_diff_grad, max_relative_error
from seqlab.synthetic import make_synthetic_corpus
from seqlab.tagger import (
    ModelBundle,
    ModelConfig,
    ModelFormatError,
    TrainingDiverged,
    attach_lookup_table,
    expected_param_shapes,
    init_model,
    load_model,
    lookup_provider,
    model_forward,
    predict,
    predict_corpus,
    read_model,
    resolve_max_word_len,
    save_model,
    sentence_nll_grads,
    tags_to_indices,
    train,
    write_model,
)

TINY = ModelConfig(
    word_dim=5,
    label_set=("a",),
    d_ce=3,
    n_filters=2,
    kernel_widths=(2, 3),
    l_char=4,
    max_word_len=7,
    bilstm1_units=3,
    bilstm2_units=2,
    bilstm_dropout=0.0,
    dropout=0.0,
    epochs=5,
    rng_seed=3,
)


def _small_corpus():
    return TaggedCorpus(
        (
            Sentence(("chest", "pain", "today"), ("B-a", "I-a", "O")),
            Sentence(("gave", "aspirin"), ("O", "B-a")),
            Sentence(("pain", "resolved"), ("B-a", "O")),
        ),
        ("a",),
    )


def test_default_config_hyperparameters():
    config = ModelConfig(word_dim=300)
    assert config.label_set == ("problem", "treatment", "test")
    assert config.d_ce == 25
    assert config.n_filters == 15
    assert config.kernel_widths == (3, 5, 7)
    assert config.l_char == 45
    assert config.max_word_len == 30
    assert config.bilstm1_units == 275
    assert config.bilstm2_units == 100
    assert config.bilstm_dropout == 0.25
    assert config.dropout == 0.50
    assert config.learning_rate == 0.02
    assert config.epochs == 200
    assert config.optimizer == "nadam"
    assert config.n_tags == 7
    assert config.input_width == 300 + 45 + 8


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(word_dim=0)
    with pytest.raises(ValueError):
        ModelConfig(word_dim=5, max_word_len=2)  # shorter than widest kernel
    with pytest.raises(ValueError):
        ModelConfig(word_dim=5, dropout=1.0)
    with pytest.raises(ValueError):
        ModelConfig(word_dim=5, optimizer="sgd")
    with pytest.raises(ValueError):
        ModelConfig(word_dim=5, learning_rate=0.0)


def test_config_dict_roundtrip():
    config = ModelConfig(word_dim=17, label_set=("x", "y"), rng_seed=9)
    assert ModelConfig.from_dict(config.to_dict()) == config


def test_expected_shapes_default_config():
    config = ModelConfig(word_dim=768)
    shapes = expected_param_shapes(config)
    assert shapes["char_embed"] == (97, 25)
    assert shapes["char_conv5_kernel"] == (15, 5, 25)
    assert shapes["char_dense_w"] == (45, 45)
    assert shapes["bilstm1_fwd_w"] == (4 * 275, 768 + 45 + 8)
    assert shapes["bilstm2_bwd_u"] == (4 * 100, 100)
    assert shapes["proj_w"] == (7, 200)
    assert shapes["crf_transitions"] == (7, 7)
    assert "word_lookup" not in shapes
    assert expected_param_shapes(config, vocab_size=50)["word_lookup"] == (50, 768)


def test_init_model_matches_expected_shapes():
    bundle = init_model(TINY)
    expected = expected_param_shapes(TINY)
    assert set(bundle.params) == set(expected)
    for name, shape in expected.items():
        assert bundle.params[name].shape == shape
        assert bundle.params[name].dtype == np.float64
    # CRF start/stop and projection bias start at zero.
    assert np.all(bundle.params["crf_start"] == 0.0)
    assert np.all(bundle.params["crf_stop"] == 0.0)
    assert np.all(bundle.params["proj_b"] == 0.0)
    # LSTM forget-gate bias block is one.
    b = bundle.params["bilstm1_fwd_b"]
    units = TINY.bilstm1_units
    assert np.all(b[units : 2 * units] == 1.0)


def test_init_model_seed_behavior():
    one = init_model(TINY, seed=5)
    two = init_model(TINY, seed=5)
    other = init_model(TINY, seed=6)
    assert one.config.rng_seed == 5
    for name in one.params:
        assert np.array_equal(one.params[name], two.params[name])
    assert any(
        not np.array_equal(one.params[name], other.params[name])
        for name in one.params
    )


def test_model_forward_shape_and_determinism():
    bundle = init_model(TINY)
    provider = HashEmbeddingProvider(5, seed=9)
    feats = assemble_features(("chest", "pain", "today"), 0, provider, 7)
    emissions = model_forward(bundle, feats)
    assert emissions.shape == (3, 3)
    assert np.array_equal(emissions, model_forward(bundle, feats))


def test_full_stack_gradients():
    bundle = init_model(TINY)
    provider = HashEmbeddingProvider(5, seed=9)
    feats = assemble_features(("chest", "pain", "today"), 0, provider, 7)
    gold = tags_to_indices(("a",), ("B-a", "I-a", "O"))

    def loss() -> float:
        nll, _ = sentence_nll_grads(bundle, feats, gold, False, None)
        return nll

    _, grads = sentence_nll_grads(bundle, feats, gold, False, None)
    assert set(grads) == set(bundle.params)
    numeric = finite_diff_grad(loss, bundle.params)
    assert max_relative_error(grads, numeric) < 1e-5


def test_tags_to_indices():
    got = tags_to_indices(("a", "b"), ("O", "B-b", "I-b", "B-a"))
    assert got.tolist() == [0, 3, 4, 1]
    with pytest.raises(ValueError, match="B-c"):
        tags_to_indices(("a", "b"), ("B-c",))


def test_resolve_max_word_len():
    corpus = _small_corpus()  # longest token "resolved", 8 chars
    measured = resolve_max_word_len(
        dataclasses.replace(TINY, max_word_len=0), corpus
    )
    assert measured.max_word_len == 8
    untouched = resolve_max_word_len(TINY, corpus)
    assert untouched.max_word_len == 7


def test_train_reduces_loss_and_predicts():
    corpus = _small_corpus()
    provider = HashEmbeddingProvider(5, seed=9)
    bundle = init_model(dataclasses.replace(TINY, epochs=40, learning_rate=0.05))
    report = train(bundle, corpus, provider)
    assert report.epochs_run == 40
    assert report.epoch_nll[-1] < report.epoch_nll[0]
    assert report.epoch_nll[-1] < 0.1  # three sentences are easy to memorize
    predicted = predict_corpus(bundle, corpus, provider)
    assert predicted.sentences[0].tags == ("B-a", "I-a", "O")
    for sent in predicted.sentences:
        assert validate_iob(sent.tags) == []
        assert sent.tokens in {s.tokens for s in corpus.sentences}


def test_train_validation_and_patience():
    corpus = _small_corpus()
    provider = HashEmbeddingProvider(5, seed=9)
    bundle = init_model(dataclasses.replace(TINY, epochs=100, learning_rate=0.05))
    report = train(bundle, corpus, provider, validation=corpus, patience=10)
    assert report.epochs_run < 100
    assert len(report.val_f1) == report.epochs_run
    assert max(report.val_f1) == 1.0
    payload = report.to_dict()
    assert payload["epochs_run"] == report.epochs_run
    assert payload["wall_clock_seconds"] > 0.0


def test_train_rejects_provider_dim_mismatch():
    bundle = init_model(TINY)
    with pytest.raises(ValueError, match="dim"):
        train(bundle, _small_corpus(), HashEmbeddingProvider(8, seed=1))


def test_train_rejects_empty_corpus():
    bundle = init_model(TINY)
    with pytest.raises(ValueError, match="empty"):
        train(bundle, TaggedCorpus((), ("a",)), HashEmbeddingProvider(5, seed=1))


def test_training_diverged_on_poisoned_params():
    corpus = _small_corpus()
    bundle = init_model(TINY)
    bundle.params["proj_b"][0] = np.nan
    with pytest.raises(TrainingDiverged):
        train(bundle, corpus, HashEmbeddingProvider(5, seed=9))


def test_train_deterministic_given_seed():
    corpus = _small_corpus()
    provider = HashEmbeddingProvider(5, seed=9)

    def run() -> bytes:
        bundle = init_model(dataclasses.replace(TINY, epochs=3), seed=11)
        train(bundle, corpus, provider)
        return save_model(bundle)

    assert run() == run()


def test_lookup_training_flow():
    corpus = _small_corpus()
    bundle = init_model(dataclasses.replace(TINY, epochs=30, learning_rate=0.05))
    provider = attach_lookup_table(bundle, corpus)
    assert bundle.word_vocab[0] == "<unk>"
    assert "word_lookup" in bundle.params
    before = bundle.params["word_lookup"].copy()
    report = train(bundle, corpus, provider, validation=corpus, patience=5)
    # The lookup table itself trains.
    assert not np.array_equal(before, bundle.params["word_lookup"])
    assert max(report.val_f1) == 1.0
    # Unknown words at prediction time hit the UNK row, not an error.
    tags = predict(bundle, ("unseen", "pain"), provider)
    assert len(tags) == 2
    # A redundant attach is rejected, as is a detached provider.
    with pytest.raises(ValueError, match="already owns"):
        attach_lookup_table(bundle, corpus)
    detached = lookup_provider(ModelBundle(bundle.config, dict(bundle.params), bundle.word_vocab))
    # Same vocab but a different bundle's table object: the original bundle
    # must refuse a provider whose table it does not own.
    rebuilt = lookup_provider(bundle)
    assert rebuilt.table is bundle.params["word_lookup"]
    with pytest.raises(ValueError, match="not attached"):
        train(init_model(TINY), corpus, detached)


def test_lookup_provider_requires_table():
    bundle = init_model(TINY)
    with pytest.raises(ValueError, match="no trained lookup"):
        lookup_provider(bundle)


def test_save_load_roundtrip_bitwise():
    corpus = _small_corpus()
    bundle = init_model(dataclasses.replace(TINY, epochs=2))
    provider = attach_lookup_table(bundle, corpus)
    train(bundle, corpus, provider)
    blob = save_model(bundle)
    loaded = load_model(blob)
    assert loaded.config == bundle.config
    assert loaded.word_vocab == bundle.word_vocab
    assert set(loaded.params) == set(bundle.params)
    for name in bundle.params:
        assert np.array_equal(loaded.params[name], bundle.params[name])
    # Serializing the loaded bundle reproduces the file bytes exactly.
    assert save_model(loaded) == blob


def test_save_load_behavioral_equality():
    provider = HashEmbeddingProvider(5, seed=9)
    bundle = init_model(dataclasses.replace(TINY, epochs=2))
    train(bundle, _small_corpus(), provider)
    loaded = load_model(save_model(bundle))
    for tokens in (("chest", "pain"), ("new", "words", "here"), ("a",)):
        assert predict(bundle, tokens, provider) == predict(loaded, tokens, provider)


def test_write_read_model(tmp_path):
    bundle = init_model(TINY)
    path = tmp_path / "model.seqlab"
    write_model(bundle, path)
    loaded = read_model(path)
    assert loaded.config == TINY


def test_load_rejects_corrupt_files():
    bundle = init_model(TINY)
    blob = save_model(bundle)
    with pytest.raises(ModelFormatError, match="magic"):
        load_model(b"WRONGMAG" + blob[8:])
    with pytest.raises(ModelFormatError, match="truncated"):
        load_model(blob[: len(blob) // 2])
    with pytest.raises(ModelFormatError, match="trailing"):
        load_model(blob + b"\x00")
    with pytest.raises(ModelFormatError):
        load_model(b"")


def test_load_rejects_version_and_shape_mismatch():
    bundle = init_model(TINY)
    blob = save_model(bundle)
    bad_version = save_model(
        ModelBundle(bundle.config, bundle.params, None, format_version=99)
    )
    with pytest.raises(ModelFormatError, match="version"):
        load_model(bad_version)
    # Tamper: claim a different l_char in the header so shapes disagree.
    tampered = blob.replace(b'"l_char": 4', b'"l_char": 6')
    assert tampered != blob
    with pytest.raises(ModelFormatError):
        load_model(tampered)


def test_synthetic_corpus_shape():
    corpus = make_synthetic_corpus(20, seed=5)
    assert len(corpus.sentences) == 20
    assert corpus.label_set == ("problem", "treatment", "test")
    for sent in corpus.sentences:
        assert validate_iob(sent.tags) == []
    # Every sentence carries at least one entity.
    assert all(any(t != "O" for t in s.tags) for s in corpus.sentences)
    assert make_synthetic_corpus(20, seed=5) == corpus
    assert make_synthetic_corpus(20, seed=6) != corpus
