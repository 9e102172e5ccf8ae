"""Built-in oracle suites runnable from the command line.

Each suite checks a fast implementation against an independent reference:
the CRF dynamic programs against brute-force path enumeration, the analytic
backward passes against central finite differences, and the structural
converters against round-trip identities.  The ``seqlab selftest``
subcommand runs all suites and reports one line each.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracles
from .corpus import iob_tags, parse_conll, validate_iob, write_conll
from .crf import (
    CrfParams,
    crf_nll_grad,
    fully_legal_mask,
    log_partition,
    marginals,
    transition_mask,
    viterbi,
)
from .features import HashEmbeddingProvider
from .neural import (
    conv1d_valid,
    conv1d_valid_backward,
    finite_diff_grad,
    init_char_encoder,
    init_lstm,
    char_encoder_batch_backward,
    char_encoder_batch_forward,
    lstm_backward,
    lstm_run,
    max_relative_error,
)
from .relabel import build_relabel_config, relabel_corpus
from .synthetic import random_corpus
from .tagger import (
    ModelConfig,
    init_model,
    sentence_nll_grads,
    tags_to_indices,
)
from .features import assemble_features


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str


def random_crf_instance(
    rng: np.random.Generator,
) -> tuple[CrfParams, np.ndarray]:
    """Random scores with T in 1..6 and K in 2..5.

    Odd K gets the IOB legality mask for (K-1)/2 classes; even K runs
    unmasked, so both masked and dense transition structures are exercised.
    """
    t_len = int(rng.integers(1, 7))
    k = int(rng.integers(2, 6))
    if k % 2 == 1:
        classes = tuple(f"c{i}" for i in range((k - 1) // 2))
        start_legal, trans_legal = transition_mask(classes)
    else:
        start_legal, trans_legal = fully_legal_mask(k)
    params = CrfParams(
        rng.normal(size=(k, k)),
        rng.normal(size=k),
        rng.normal(size=k),
        start_legal,
        trans_legal,
    )
    return params, rng.normal(size=(t_len, k))


def crf_equivalence_suite(n_instances: int = 200, seed: int = 7) -> SuiteResult:
    """CRF recursions against brute-force enumeration on random instances."""
    rng = np.random.default_rng(seed)
    worst_lz = 0.0
    worst_marg = 0.0
    for i in range(n_instances):
        params, emissions = random_crf_instance(rng)
        args = (
            params.transitions, params.start, params.stop, emissions,
            params.start_legal, params.trans_legal,
        )
        lz = log_partition(params, emissions)
        lz_ref = oracles.brute_force_log_partition(*args)
        worst_lz = max(worst_lz, abs(lz - lz_ref) / max(1.0, abs(lz_ref)))
        if worst_lz > 1e-9:
            return SuiteResult(
                "crf-equivalence", False,
                f"instance {i}: log partition off by {worst_lz:.2e}",
            )
        path, score = viterbi(params, emissions)
        path_ref, score_ref = oracles.brute_force_best_path(*args)
        if score != score_ref or not np.array_equal(path, path_ref):
            return SuiteResult(
                "crf-equivalence", False, f"instance {i}: viterbi disagrees"
            )
        marg = marginals(params, emissions)
        marg_ref = oracles.brute_force_marginals(*args)
        worst_marg = max(worst_marg, float(np.max(np.abs(marg - marg_ref))))
        if worst_marg > 1e-9:
            return SuiteResult(
                "crf-equivalence", False,
                f"instance {i}: marginals off by {worst_marg:.2e}",
            )
        row_err = float(np.max(np.abs(marg.sum(axis=1) - 1.0)))
        if row_err > 1e-10:
            return SuiteResult(
                "crf-equivalence", False,
                f"instance {i}: marginal rows sum off by {row_err:.2e}",
            )
    return SuiteResult(
        "crf-equivalence", True,
        f"{n_instances} instances, log-Z err {worst_lz:.2e}, "
        f"marginal err {worst_marg:.2e}",
    )


def gradient_suite(instances_per_layer: int = 10, seed: int = 11) -> SuiteResult:
    """Analytic backward passes against central finite differences."""
    rng = np.random.default_rng(seed)
    tol = 1e-5
    worst = 0.0

    def check(name: str, err: float) -> SuiteResult | None:
        nonlocal worst
        worst = max(worst, err)
        if err > tol:
            return SuiteResult("gradients", False, f"{name}: rel err {err:.2e}")
        return None

    for _ in range(instances_per_layer):
        x = rng.normal(size=(int(rng.integers(3, 7)), int(rng.integers(1, 4))))
        k = rng.normal(size=(3, x.shape[1]))
        b = rng.normal(size=1)
        w = rng.normal(size=x.shape[0] - 2)
        d_x, d_k, d_b = conv1d_valid_backward(x, k, w)
        fd = finite_diff_grad(
            lambda: float(conv1d_valid(x, k, b[0]) @ w), {"x": x, "k": k, "b": b}
        )
        bad = check(
            "conv1d",
            max_relative_error({"x": d_x, "k": d_k, "b": np.array([d_b])}, fd),
        )
        if bad:
            return bad

    for _ in range(instances_per_layer):
        p = init_lstm(rng, 3, 3)
        xs = rng.normal(size=(4, 3))
        wout = rng.normal(size=(4, 3))

        def lstm_loss() -> float:
            hs, _ = lstm_run(xs, p)
            return float((hs * wout).sum())

        _, cache = lstm_run(xs, p)
        d_xs, g = lstm_backward(p, cache, wout)
        fd = finite_diff_grad(lstm_loss, {"w": p.w, "u": p.u, "b": p.b, "xs": xs})
        bad = check(
            "lstm",
            max_relative_error(
                {"w": g["w"], "u": g["u"], "b": g["b"], "xs": d_xs}, fd
            ),
        )
        if bad:
            return bad

    for _ in range(instances_per_layer):
        cp = init_char_encoder(rng, 12, 2, 2, (3, 5, 7), 3)
        chars = rng.integers(0, 12, size=(2, 8))
        wout = rng.normal(size=(2, 3))

        def char_loss() -> float:
            out, _ = char_encoder_batch_forward(chars, cp)
            return float((out * wout).sum())

        _, cache = char_encoder_batch_forward(chars, cp)
        g = char_encoder_batch_backward(cp, cache, wout)
        analytic = {
            "embed": g["embed"], "dw": g["dense_w"], "db": g["dense_b"],
        }
        fd_params = {"embed": cp.embed, "dw": cp.dense_w, "db": cp.dense_b}
        for width in (3, 5, 7):
            analytic[f"k{width}"] = g["kernels"][width]
            analytic[f"b{width}"] = g["biases"][width]
            fd_params[f"k{width}"] = cp.kernels[width]
            fd_params[f"b{width}"] = cp.biases[width]
        fd = finite_diff_grad(char_loss, fd_params)
        bad = check("char-encoder", max_relative_error(analytic, fd))
        if bad:
            return bad

    for _ in range(instances_per_layer):
        classes = ("a",)
        start_legal, trans_legal = transition_mask(classes)
        k_tags = 3
        trans = rng.normal(size=(k_tags, k_tags))
        start = rng.normal(size=k_tags)
        stop = rng.normal(size=k_tags)
        emis = rng.normal(size=(4, k_tags))
        gold = tags_to_indices(classes, ("O", "B-a", "I-a", "O"))

        def crf_loss() -> float:
            p = CrfParams(trans, start, stop, start_legal, trans_legal)
            return crf_nll_grad(p, emis, gold)[0]

        p = CrfParams(trans, start, stop, start_legal, trans_legal)
        _, d_emis, g = crf_nll_grad(p, emis, gold)
        fd = finite_diff_grad(
            crf_loss, {"emis": emis, "trans": trans, "start": start, "stop": stop}
        )
        bad = check(
            "crf-nll",
            max_relative_error(
                {"emis": d_emis, "trans": g["transitions"],
                 "start": g["start"], "stop": g["stop"]},
                fd,
            ),
        )
        if bad:
            return bad

    # Full stack on a tiny config, evaluation-mode dropout.
    config = ModelConfig(
        word_dim=5, label_set=("a",), d_ce=3, n_filters=2, l_char=4,
        max_word_len=7, bilstm1_units=3, bilstm2_units=2,
        bilstm_dropout=0.0, dropout=0.0, rng_seed=3,
    )
    bundle = init_model(config)
    provider = HashEmbeddingProvider(5, seed=9)
    tokens = ("chest", "pain", "today")
    feats = assemble_features(tokens, 0, provider, config.max_word_len)
    gold = tags_to_indices(("a",), ("O", "B-a", "I-a"))

    def stack_loss() -> float:
        return sentence_nll_grads(bundle, feats, gold, False, None)[0]

    _, grads = sentence_nll_grads(bundle, feats, gold, False, None)
    fd = finite_diff_grad(stack_loss, bundle.params)
    bad = check("full-stack", max_relative_error(grads, fd))
    if bad:
        return bad
    return SuiteResult(
        "gradients", True,
        f"{instances_per_layer}/layer + full stack, worst rel err {worst:.2e}",
    )


def roundtrip_suite(n_corpora: int = 200, seed: int = 13) -> SuiteResult:
    """Structural round trips and relabel invariants on random corpora."""
    rng = np.random.default_rng(seed)
    for i in range(n_corpora):
        corpus = random_corpus(rng)
        if parse_conll(write_conll(corpus)) != corpus:
            return SuiteResult("roundtrips", False, f"corpus {i}: CoNLL round trip")
        for sent in corpus.sentences:
            if validate_iob(sent.tags):
                return SuiteResult("roundtrips", False, f"corpus {i}: invalid tags")
        flagged = [t for s in corpus.sentences for t in s.tokens if rng.random() < 0.3]
        config = build_relabel_config([w.lower() for w in flagged], [], [])
        relabeled, _ = relabel_corpus(corpus, config)
        again, summary = relabel_corpus(relabeled, config)
        if again != relabeled or summary.total_shifts() != 0:
            return SuiteResult("roundtrips", False, f"corpus {i}: not idempotent")
    return SuiteResult("roundtrips", True, f"{n_corpora} random corpora")


def run_all(fast: bool = False) -> list[SuiteResult]:
    scale = 1 if fast else 2
    return [
        crf_equivalence_suite(n_instances=100 * scale),
        gradient_suite(instances_per_layer=3 * scale),
        roundtrip_suite(n_corpora=100 * scale),
    ]
