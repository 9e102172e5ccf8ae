"""BiLSTM-CRF sequence tagger: configuration, training, prediction, model I/O.

Per token the model concatenates a word vector, the convolutional character
encoding, and the writing-format one-hot, passes the sequence through two
bidirectional LSTM layers with inter-layer dropout, projects to per-tag
emission scores, and decodes with a masked linear-chain CRF.  Sentences are
processed one at a time; all randomness (init, shuffling, dropout) flows
from a single seed.
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .corpus import Sentence, TaggedCorpus, iob_tags
from .crf import CrfParams, crf_nll_grad, transition_mask, viterbi
from .evaluation import entity_prf
from .features import (
    CHAR_VOCAB_SIZE,
    LookupEmbeddingProvider,
    N_FORMATS,
    SentenceFeatures,
    WordVectorProvider,
    assemble_features,
)
from .neural import (
    CharEncoderParams,
    LstmParams,
    NadamState,
    NonFiniteGradient,
    bilstm_backward,
    bilstm_forward,
    char_encoder_batch_backward,
    char_encoder_batch_forward,
    dense_backward,
    dense_forward,
    dropout_mask,
    glorot_uniform,
    init_char_encoder,
    init_lstm,
    nadam_init,
    nadam_step,
)

MODEL_MAGIC = b"SEQLAB01"
FORMAT_VERSION = 1


class ModelFormatError(Exception):
    """Raised when a serialized model cannot be read back."""


class TrainingDiverged(RuntimeError):
    """Raised when training hits a non-finite loss."""


@dataclass(frozen=True)
class ModelConfig:
    """Tagger hyperparameters.

    ``word_dim`` must match the word-vector provider.  ``max_word_len`` of 0
    means "measure the longest training token" (floored at the widest
    kernel); the resolved value is stored back before saving.
    """

    word_dim: int
    label_set: tuple[str, ...] = ("problem", "treatment", "test")
    d_ce: int = 25
    n_filters: int = 15
    kernel_widths: tuple[int, ...] = (3, 5, 7)
    l_char: int = 45
    max_word_len: int = 30
    bilstm1_units: int = 275
    bilstm2_units: int = 100
    bilstm_dropout: float = 0.25
    dropout: float = 0.50
    learning_rate: float = 0.02
    epochs: int = 200
    optimizer: str = "nadam"
    rng_seed: int = 0

    def __post_init__(self) -> None:
        for name in ("word_dim", "d_ce", "n_filters", "l_char", "bilstm1_units",
                     "bilstm2_units", "epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not self.kernel_widths or any(k < 1 for k in self.kernel_widths):
            raise ValueError(f"bad kernel widths {self.kernel_widths}")
        if self.max_word_len != 0 and self.max_word_len < max(self.kernel_widths):
            raise ValueError(
                f"max_word_len {self.max_word_len} shorter than widest kernel "
                f"{max(self.kernel_widths)}"
            )
        for name in ("bilstm_dropout", "dropout"):
            rate = getattr(self, name)
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {rate}")
        if self.optimizer != "nadam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")

    @property
    def n_tags(self) -> int:
        return 2 * len(self.label_set) + 1

    @property
    def input_width(self) -> int:
        return self.word_dim + self.l_char + N_FORMATS

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["label_set"] = list(self.label_set)
        d["kernel_widths"] = list(self.kernel_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["label_set"] = tuple(d["label_set"])
        d["kernel_widths"] = tuple(d["kernel_widths"])
        return cls(**d)


@dataclass
class ModelBundle:
    """A config plus its named parameter tensors (all float64).

    ``word_vocab`` is set only when the model owns a trainable lookup table;
    its order matches the table rows.
    """

    config: ModelConfig
    params: dict[str, np.ndarray]
    word_vocab: tuple[str, ...] | None = None
    format_version: int = FORMAT_VERSION


@dataclass
class TrainReport:
    """Per-epoch trace of one training run; list lengths equal epochs run."""

    epoch_nll: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)
    wall_clock_seconds: float = 0.0

    @property
    def epochs_run(self) -> int:
        return len(self.epoch_nll)

    def to_dict(self) -> dict:
        return {
            "epoch_nll": self.epoch_nll,
            "val_f1": self.val_f1,
            "epochs_run": self.epochs_run,
            "wall_clock_seconds": self.wall_clock_seconds,
        }


def expected_param_shapes(
    config: ModelConfig, vocab_size: int | None = None
) -> dict[str, tuple[int, ...]]:
    """Tensor names and shapes of a bundle for ``config``, in storage order."""
    shapes: dict[str, tuple[int, ...]] = {
        "char_embed": (CHAR_VOCAB_SIZE, config.d_ce)
    }
    for k in config.kernel_widths:
        shapes[f"char_conv{k}_kernel"] = (config.n_filters, k, config.d_ce)
        shapes[f"char_conv{k}_bias"] = (config.n_filters,)
    pooled = config.n_filters * len(config.kernel_widths)
    shapes["char_dense_w"] = (config.l_char, pooled)
    shapes["char_dense_b"] = (config.l_char,)
    dims = {
        "bilstm1": (config.bilstm1_units, config.input_width),
        "bilstm2": (config.bilstm2_units, 2 * config.bilstm1_units),
    }
    for layer, (units, width) in dims.items():
        for direction in ("fwd", "bwd"):
            shapes[f"{layer}_{direction}_w"] = (4 * units, width)
            shapes[f"{layer}_{direction}_u"] = (4 * units, units)
            shapes[f"{layer}_{direction}_b"] = (4 * units,)
    shapes["proj_w"] = (config.n_tags, 2 * config.bilstm2_units)
    shapes["proj_b"] = (config.n_tags,)
    shapes["crf_transitions"] = (config.n_tags, config.n_tags)
    shapes["crf_start"] = (config.n_tags,)
    shapes["crf_stop"] = (config.n_tags,)
    if vocab_size is not None:
        shapes["word_lookup"] = (vocab_size, config.word_dim)
    return shapes


def init_model(config: ModelConfig, seed: int | None = None) -> ModelBundle:
    """Fresh parameters for ``config``.

    Weight matrices are Glorot-uniform, biases zero except the LSTM forget
    gates (+1); CRF start/stop scores start at zero.  ``seed`` overrides
    ``config.rng_seed`` and is recorded back into the bundle's config so the
    training stream continues from the same seed.
    """
    if seed is not None:
        config = dataclasses.replace(config, rng_seed=seed)
    rng = np.random.default_rng(config.rng_seed)
    params: dict[str, np.ndarray] = {}
    char = init_char_encoder(
        rng, CHAR_VOCAB_SIZE, config.d_ce, config.n_filters,
        config.kernel_widths, config.l_char,
    )
    params["char_embed"] = char.embed
    for k in config.kernel_widths:
        params[f"char_conv{k}_kernel"] = char.kernels[k]
        params[f"char_conv{k}_bias"] = char.biases[k]
    params["char_dense_w"] = char.dense_w
    params["char_dense_b"] = char.dense_b
    dims = {
        "bilstm1": (config.bilstm1_units, config.input_width),
        "bilstm2": (config.bilstm2_units, 2 * config.bilstm1_units),
    }
    for layer, (units, width) in dims.items():
        for direction in ("fwd", "bwd"):
            lstm = init_lstm(rng, width, units)
            params[f"{layer}_{direction}_w"] = lstm.w
            params[f"{layer}_{direction}_u"] = lstm.u
            params[f"{layer}_{direction}_b"] = lstm.b
    k_tags = config.n_tags
    params["proj_w"] = glorot_uniform(
        rng, 2 * config.bilstm2_units, k_tags, (k_tags, 2 * config.bilstm2_units)
    )
    params["proj_b"] = np.zeros(k_tags)
    params["crf_transitions"] = glorot_uniform(rng, k_tags, k_tags, (k_tags, k_tags))
    params["crf_start"] = np.zeros(k_tags)
    params["crf_stop"] = np.zeros(k_tags)
    return ModelBundle(config, params)


def _char_params(bundle: ModelBundle) -> CharEncoderParams:
    p = bundle.params
    widths = bundle.config.kernel_widths
    return CharEncoderParams(
        p["char_embed"],
        {k: p[f"char_conv{k}_kernel"] for k in widths},
        {k: p[f"char_conv{k}_bias"] for k in widths},
        p["char_dense_w"],
        p["char_dense_b"],
    )


def _lstm_params(bundle: ModelBundle, layer: str, direction: str) -> LstmParams:
    p = bundle.params
    return LstmParams(
        p[f"{layer}_{direction}_w"],
        p[f"{layer}_{direction}_u"],
        p[f"{layer}_{direction}_b"],
    )


def crf_params(bundle: ModelBundle) -> CrfParams:
    start_legal, trans_legal = transition_mask(bundle.config.label_set)
    p = bundle.params
    return CrfParams(
        p["crf_transitions"], p["crf_start"], p["crf_stop"], start_legal, trans_legal
    )


def attach_lookup_table(bundle: ModelBundle, corpus: TaggedCorpus) -> LookupEmbeddingProvider:
    """Create the trainable word-lookup table for ``corpus`` on this bundle.

    The vocabulary is the sorted set of training tokens behind an
    unknown-word row; the table becomes a named parameter so the optimizer
    updates it with everything else.
    """
    if "word_lookup" in bundle.params:
        raise ValueError("bundle already owns a lookup table")
    words = [tok for sent in corpus.sentences for tok in sent.tokens]
    rng = np.random.default_rng((bundle.config.rng_seed, 1))
    provider = LookupEmbeddingProvider.build(words, bundle.config.word_dim, rng)
    bundle.params["word_lookup"] = provider.table
    bundle.word_vocab = provider.vocab
    return provider


def lookup_provider(bundle: ModelBundle) -> LookupEmbeddingProvider:
    """Re-wire the provider for a bundle that owns a lookup table."""
    if bundle.word_vocab is None or "word_lookup" not in bundle.params:
        raise ValueError("bundle has no trained lookup table")
    return LookupEmbeddingProvider(bundle.word_vocab, bundle.params["word_lookup"])


def _forward(
    bundle: ModelBundle,
    feats: SentenceFeatures,
    training: bool,
    rng: np.random.Generator | None,
    live_lookup: bool,
) -> tuple[np.ndarray, dict]:
    config = bundle.config
    if live_lookup:
        words = bundle.params["word_lookup"][feats.lookup_rows]
    else:
        words = feats.word_vectors
    char_out, char_cache = char_encoder_batch_forward(
        feats.char_indices, _char_params(bundle), training, config.dropout, rng
    )
    x = np.concatenate([words, char_out, feats.format_onehots], axis=1)
    l1f, l1b = _lstm_params(bundle, "bilstm1", "fwd"), _lstm_params(bundle, "bilstm1", "bwd")
    h1, cache1 = bilstm_forward(x, l1f, l1b)
    if training and config.bilstm_dropout > 0.0:
        mask1 = dropout_mask(h1.shape, config.bilstm_dropout, rng)
        h1d = h1 * mask1
    else:
        mask1, h1d = None, h1
    l2f, l2b = _lstm_params(bundle, "bilstm2", "fwd"), _lstm_params(bundle, "bilstm2", "bwd")
    h2, cache2 = bilstm_forward(h1d, l2f, l2b)
    if training and config.dropout > 0.0:
        mask2 = dropout_mask(h2.shape, config.dropout, rng)
        h2d = h2 * mask2
    else:
        mask2, h2d = None, h2
    emissions = dense_forward(h2d, bundle.params["proj_w"], bundle.params["proj_b"])
    cache = {
        "feats": feats,
        "char_cache": char_cache,
        "cache1": cache1,
        "cache2": cache2,
        "mask1": mask1,
        "mask2": mask2,
        "h2d": h2d,
        "live_lookup": live_lookup,
    }
    return emissions, cache


def model_forward(
    bundle: ModelBundle,
    feats: SentenceFeatures,
    training: bool = False,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-token emission scores [T, n_tags] for one sentence's features."""
    emissions, _ = _forward(bundle, feats, training, rng, "word_lookup" in bundle.params)
    return emissions


def _backward(
    bundle: ModelBundle, cache: dict, d_emissions: np.ndarray
) -> dict[str, np.ndarray]:
    config = bundle.config
    grads: dict[str, np.ndarray] = {}
    d_h2d, grads["proj_w"], grads["proj_b"] = dense_backward(
        cache["h2d"], bundle.params["proj_w"], d_emissions
    )
    if cache["mask2"] is not None:
        d_h2d = d_h2d * cache["mask2"]
    l2f, l2b = _lstm_params(bundle, "bilstm2", "fwd"), _lstm_params(bundle, "bilstm2", "bwd")
    d_h1d, g2f, g2b = bilstm_backward(l2f, l2b, cache["cache2"], d_h2d)
    for direction, g in (("fwd", g2f), ("bwd", g2b)):
        for key in ("w", "u", "b"):
            grads[f"bilstm2_{direction}_{key}"] = g[key]
    if cache["mask1"] is not None:
        d_h1d = d_h1d * cache["mask1"]
    l1f, l1b = _lstm_params(bundle, "bilstm1", "fwd"), _lstm_params(bundle, "bilstm1", "bwd")
    d_x, g1f, g1b = bilstm_backward(l1f, l1b, cache["cache1"], d_h1d)
    for direction, g in (("fwd", g1f), ("bwd", g1b)):
        for key in ("w", "u", "b"):
            grads[f"bilstm1_{direction}_{key}"] = g[key]
    d_char_out = d_x[:, config.word_dim : config.word_dim + config.l_char]
    char_grads = char_encoder_batch_backward(
        _char_params(bundle), cache["char_cache"], d_char_out
    )
    grads["char_embed"] = char_grads["embed"]
    for k in config.kernel_widths:
        grads[f"char_conv{k}_kernel"] = char_grads["kernels"][k]
        grads[f"char_conv{k}_bias"] = char_grads["biases"][k]
    grads["char_dense_w"] = char_grads["dense_w"]
    grads["char_dense_b"] = char_grads["dense_b"]
    if cache["live_lookup"]:
        d_words = d_x[:, : config.word_dim]
        d_table = np.zeros_like(bundle.params["word_lookup"])
        np.add.at(d_table, cache["feats"].lookup_rows, d_words)
        grads["word_lookup"] = d_table
    return grads


def sentence_nll_grads(
    bundle: ModelBundle,
    feats: SentenceFeatures,
    gold_indices: np.ndarray,
    training: bool,
    rng: np.random.Generator | None,
) -> tuple[float, dict[str, np.ndarray]]:
    """CRF negative log likelihood of one sentence plus all parameter grads."""
    live = "word_lookup" in bundle.params
    emissions, cache = _forward(bundle, feats, training, rng, live)
    if not np.all(np.isfinite(emissions)):
        # The IOB mask always admits the all-O path, so non-finite scores
        # can only come from diverged parameters, not from the mask.
        raise TrainingDiverged("non-finite emission scores")
    nll, d_emissions, crf_grads = crf_nll_grad(crf_params(bundle), emissions, gold_indices)
    grads = _backward(bundle, cache, d_emissions)
    grads["crf_transitions"] = crf_grads["transitions"]
    grads["crf_start"] = crf_grads["start"]
    grads["crf_stop"] = crf_grads["stop"]
    return nll, grads


def tags_to_indices(label_set: Sequence[str], tags: Sequence[str]) -> np.ndarray:
    index = {tag: i for i, tag in enumerate(iob_tags(label_set))}
    try:
        return np.array([index[t] for t in tags], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"tag {exc.args[0]!r} outside label set {label_set}") from None


def resolve_max_word_len(config: ModelConfig, corpus: TaggedCorpus) -> ModelConfig:
    """Replace a max_word_len of 0 with the measured longest training token."""
    if config.max_word_len != 0:
        return config
    longest = max(
        (len(tok) for sent in corpus.sentences for tok in sent.tokens), default=1
    )
    resolved = max(longest, max(config.kernel_widths))
    return dataclasses.replace(config, max_word_len=resolved)


def predict(
    bundle: ModelBundle,
    tokens: Sequence[str],
    provider: WordVectorProvider,
    sentence_index: int = 0,
) -> tuple[str, ...]:
    """Most likely tag sequence for one sentence (always valid IOB)."""
    feats = assemble_features(
        tokens, sentence_index, provider, bundle.config.max_word_len
    )
    emissions = model_forward(bundle, feats, training=False)
    path, _ = viterbi(crf_params(bundle), emissions)
    tags = iob_tags(bundle.config.label_set)
    return tuple(tags[i] for i in path)


def predict_corpus(
    bundle: ModelBundle, corpus: TaggedCorpus, provider: WordVectorProvider
) -> TaggedCorpus:
    sentences = tuple(
        Sentence(sent.tokens, predict(bundle, sent.tokens, provider, i))
        for i, sent in enumerate(corpus.sentences)
    )
    return TaggedCorpus(sentences, bundle.config.label_set)


def train(
    bundle: ModelBundle,
    corpus: TaggedCorpus,
    provider: WordVectorProvider,
    validation: TaggedCorpus | None = None,
    patience: int | None = None,
) -> TrainReport:
    """Nadam training over per-sentence CRF losses.

    Each epoch shuffles the sentence order and applies one optimizer step
    per sentence.  When ``validation`` is given, entity micro-F1 on it is
    recorded per epoch, and ``patience`` stops training after that many
    epochs without improvement.  Features are assembled once and reused
    across epochs.  A non-finite loss aborts with TrainingDiverged.
    """
    if len(corpus) == 0:
        raise ValueError("cannot train on an empty corpus")
    config = resolve_max_word_len(bundle.config, corpus)
    bundle.config = config
    if isinstance(provider, LookupEmbeddingProvider):
        if provider.table is not bundle.params.get("word_lookup"):
            raise ValueError(
                "lookup provider is not attached to this bundle; "
                "use attach_lookup_table"
            )
    if provider.dim != config.word_dim:
        raise ValueError(
            f"provider dim {provider.dim} != config word_dim {config.word_dim}"
        )
    rng = np.random.default_rng((config.rng_seed, 2))
    state: NadamState = nadam_init(bundle.params)
    feats = [
        assemble_features(sent.tokens, i, provider, config.max_word_len)
        for i, sent in enumerate(corpus.sentences)
    ]
    gold = [tags_to_indices(config.label_set, sent.tags) for sent in corpus.sentences]

    report = TrainReport()
    best_f1 = -1.0
    stale = 0
    started = time.perf_counter()
    for epoch in range(config.epochs):
        order = rng.permutation(len(corpus.sentences))
        total = 0.0
        for si in order:
            try:
                nll, grads = sentence_nll_grads(bundle, feats[si], gold[si], True, rng)
                if not np.isfinite(nll):
                    raise TrainingDiverged("non-finite loss")
                nadam_step(bundle.params, grads, state, config.learning_rate)
            except (TrainingDiverged, NonFiniteGradient) as exc:
                raise TrainingDiverged(
                    f"epoch {epoch + 1} sentence {si}: {exc}"
                ) from None
            total += nll
        report.epoch_nll.append(total / len(corpus.sentences))
        if validation is not None:
            predicted = predict_corpus(bundle, validation, provider)
            f1 = entity_prf(validation, predicted).micro.f1
            report.val_f1.append(f1)
            if f1 > best_f1:
                best_f1, stale = f1, 0
            else:
                stale += 1
            if patience is not None and stale >= patience:
                break
    report.wall_clock_seconds = time.perf_counter() - started
    return report


# ---------------------------------------------------------------------------
# Serialization


def save_model(bundle: ModelBundle) -> bytes:
    """Serialize a bundle: magic, JSON header, then raw float64 tensors.

    Layout: 8-byte magic; u32 length + UTF-8 JSON {format_version, config,
    word_vocab}; u32 tensor count; per tensor a u32 name length, the name,
    u32 rank, u32 dims, then the values little-endian row-major.  Bitwise
    stable for identical bundles.
    """
    header = json.dumps(
        {
            "format_version": bundle.format_version,
            "config": bundle.config.to_dict(),
            "word_vocab": list(bundle.word_vocab) if bundle.word_vocab else None,
        },
        sort_keys=True,
    ).encode("utf-8")
    out = io.BytesIO()
    out.write(MODEL_MAGIC)
    out.write(struct.pack("<I", len(header)))
    out.write(header)
    out.write(struct.pack("<I", len(bundle.params)))
    for name, tensor in bundle.params.items():
        encoded = name.encode("utf-8")
        out.write(struct.pack("<I", len(encoded)))
        out.write(encoded)
        out.write(struct.pack("<I", tensor.ndim))
        out.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        out.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    return out.getvalue()


def write_model(bundle: ModelBundle, path: str) -> None:
    with open(path, "wb") as handle:
        handle.write(save_model(bundle))


def _read_exact(buf: io.BytesIO, n: int, what: str) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise ModelFormatError(f"truncated model file while reading {what}")
    return data


def load_model(data: bytes) -> ModelBundle:
    """Inverse of :func:`save_model`; validates magic, version, and shapes."""
    buf = io.BytesIO(data)
    magic = _read_exact(buf, len(MODEL_MAGIC), "magic")
    if magic != MODEL_MAGIC:
        raise ModelFormatError(f"bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    (header_len,) = struct.unpack("<I", _read_exact(buf, 4, "header length"))
    try:
        header = json.loads(_read_exact(buf, header_len, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"unreadable header: {exc}") from None
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {version!r}")
    config = ModelConfig.from_dict(header["config"])
    vocab = header.get("word_vocab")
    word_vocab = tuple(vocab) if vocab else None

    (count,) = struct.unpack("<I", _read_exact(buf, 4, "tensor count"))
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", _read_exact(buf, 4, "tensor name length"))
        name = _read_exact(buf, name_len, "tensor name").decode("utf-8")
        (rank,) = struct.unpack("<I", _read_exact(buf, 4, f"{name} rank"))
        shape = struct.unpack(f"<{rank}I", _read_exact(buf, 4 * rank, f"{name} dims"))
        size = int(np.prod(shape, dtype=np.int64)) if rank else 1
        raw = _read_exact(buf, 8 * size, f"{name} values")
        params[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    if buf.read(1):
        raise ModelFormatError("trailing bytes after final tensor")

    expected = expected_param_shapes(
        config, len(word_vocab) if word_vocab is not None else None
    )
    if set(params) != set(expected):
        raise ModelFormatError(
            f"tensor names {sorted(params)} do not match config "
            f"(expected {sorted(expected)})"
        )
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ModelFormatError(
                f"tensor {name} has shape {params[name].shape}, expected {shape}"
            )
    return ModelBundle(config, params, word_vocab, version)


def read_model(path: str) -> ModelBundle:
    with open(path, "rb") as handle:
        return load_model(handle.read())
