"""Headline guarantees, one test per criterion.

Every test here states its tolerance and its runtime budget explicitly and
prints a PASS line, so a verbose run reads as a checklist.  The module
trains real models through the command-line entry point; expect it to take
about a minute.
"""

from __future__ import annotations

import json
import time
from collections import Counter

import numpy as np
import pytest

from seqlab.cli import run
from seqlab.corpus import (
    Sentence,
    iob_to_spans,
    parse_conll,
    spans_to_iob,
    validate_iob,
    write_conll,
)
from seqlab.crf import (
    CrfParams,
    crf_nll_grad,
    fully_legal_mask,
    log_partition,
    marginals,
    transition_mask,
    viterbi,
)
from seqlab.features import (
    HashEmbeddingProvider,
    assemble_features,
    format_onehot,
)
from seqlab.neural import (
    bilstm_backward,
    bilstm_forward,
    char_encoder_batch_backward,
    char_encoder_batch_forward,
    conv1d_valid,
    conv1d_valid_backward,
    dense_backward,
    dense_forward,
    finite_diff_grad,
    init_char_encoder,
    init_lstm,
    lstm_backward,
    lstm_run,
    max_relative_error,
)
from seqlab.oracles import (
    brute_force_best_path,
    brute_force_log_partition,
    brute_force_marginals,
    enumerate_legal_paths,
)
from seqlab.relabel import build_relabel_config, default_relabel_config, relabel_corpus, relabel_sentence
from seqlab.synthetic import make_synthetic_corpus, random_corpus
from seqlab.tagger import (
    ModelConfig,
    init_model,
    load_model,
    predict,
    save_model,
    sentence_nll_grads,
    tags_to_indices,
)

GRAD_TOL = 1e-5


def _random_crf_instance(rng):
    """T in 1..6, K in 2..5; odd K carries an IOB mask, even K is unmasked."""
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
    emissions = rng.normal(size=(t_len, k))
    return params, emissions


def test_crf_oracle_equivalence():
    rng = np.random.default_rng(20240501)
    t0 = time.perf_counter()
    for _ in range(500):
        params, emissions = _random_crf_instance(rng)
        args = (
            params.transitions,
            params.start,
            params.stop,
            emissions,
            params.start_legal,
            params.trans_legal,
        )

        ref_z = brute_force_log_partition(*args)
        assert abs(log_partition(params, emissions) - ref_z) <= 1e-9 * max(
            1.0, abs(ref_z)
        )

        path, score = viterbi(params, emissions)
        ref_path, ref_score = brute_force_best_path(*args)
        assert score == ref_score
        assert np.array_equal(path, ref_path)

        fast = marginals(params, emissions)
        assert np.max(np.abs(fast.sum(axis=1) - 1.0)) <= 1e-10
        assert np.max(np.abs(fast - brute_force_marginals(*args))) <= 1e-9
    elapsed = time.perf_counter() - t0
    assert elapsed < 10.0
    print(f"PASS: CRF oracle equivalence (500 instances, {elapsed:.2f}s)")


def test_gradient_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)

    # Convolution.
    for _ in range(50):
        t_len = int(rng.integers(3, 8))
        k = int(rng.integers(1, min(4, t_len) + 1))
        d = int(rng.integers(1, 4))
        x = rng.normal(size=(t_len, d))
        kernel = rng.normal(size=(k, d))
        weights = rng.normal(size=t_len - k + 1)
        bias = np.array([rng.normal()])

        def conv_loss() -> float:
            return float(weights @ conv1d_valid(x, kernel, float(bias[0])))

        d_x, d_kernel, d_bias = conv1d_valid_backward(x, kernel, weights)
        assert max_relative_error(d_x, finite_diff_grad(conv_loss, x)) <= GRAD_TOL
        assert (
            max_relative_error(d_kernel, finite_diff_grad(conv_loss, kernel))
            <= GRAD_TOL
        )
        assert abs(d_bias - finite_diff_grad(conv_loss, bias)[0]) <= GRAD_TOL

    # Character encoder.
    for _ in range(50):
        params = init_char_encoder(
            rng, vocab_size=12, d_ce=3, n_filters=2, widths=(2, 3), l_char=4
        )
        chars = rng.integers(0, 12, size=(int(rng.integers(1, 4)), 6))
        weights = rng.normal(size=(chars.shape[0], 4))
        tensors = {
            "embed": params.embed,
            "k2": params.kernels[2],
            "k3": params.kernels[3],
            "b2": params.biases[2],
            "b3": params.biases[3],
            "dense_w": params.dense_w,
            "dense_b": params.dense_b,
        }

        def char_loss() -> float:
            out, _ = char_encoder_batch_forward(chars, params)
            return float((weights * out).sum())

        _, cache = char_encoder_batch_forward(chars, params)
        grads = char_encoder_batch_backward(params, cache, weights)
        analytic = {
            "embed": grads["embed"],
            "k2": grads["kernels"][2],
            "k3": grads["kernels"][3],
            "b2": grads["biases"][2],
            "b3": grads["biases"][3],
            "dense_w": grads["dense_w"],
            "dense_b": grads["dense_b"],
        }
        assert (
            max_relative_error(analytic, finite_diff_grad(char_loss, tensors))
            <= GRAD_TOL
        )

    # Single LSTM step (a length-1 run) and full BiLSTM.
    for t_len, count in ((1, 50), (None, 50)):
        for _ in range(count):
            steps = t_len if t_len is not None else int(rng.integers(2, 6))
            d_in = int(rng.integers(2, 4))
            units = int(rng.integers(1, 4))
            fwd = init_lstm(rng, d_in, units)
            bwd = init_lstm(rng, d_in, units)
            xs = rng.normal(size=(steps, d_in))
            if t_len == 1:
                weights = rng.normal(size=(1, units))
                tensors = {"w": fwd.w, "u": fwd.u, "b": fwd.b, "xs": xs}

                def step_loss() -> float:
                    hs, _ = lstm_run(xs, fwd)
                    return float((weights * hs).sum())

                _, cache = lstm_run(xs, fwd)
                d_xs, grads = lstm_backward(fwd, cache, weights)
                analytic = dict(grads, xs=d_xs)
                numeric = finite_diff_grad(step_loss, tensors)
            else:
                weights = rng.normal(size=(steps, 2 * units))
                tensors = {
                    "fw": fwd.w, "fu": fwd.u, "fb": fwd.b,
                    "bw": bwd.w, "bu": bwd.u, "bb": bwd.b,
                    "xs": xs,
                }

                def bi_loss() -> float:
                    out, _ = bilstm_forward(xs, fwd, bwd)
                    return float((weights * out).sum())

                _, cache = bilstm_forward(xs, fwd, bwd)
                d_xs, gf, gb = bilstm_backward(fwd, bwd, cache, weights)
                analytic = {
                    "fw": gf["w"], "fu": gf["u"], "fb": gf["b"],
                    "bw": gb["w"], "bu": gb["u"], "bb": gb["b"],
                    "xs": d_xs,
                }
                numeric = finite_diff_grad(bi_loss, tensors)
            assert max_relative_error(analytic, numeric) <= GRAD_TOL

    # Projection layer.
    for _ in range(50):
        rows = int(rng.integers(1, 5))
        d_in = int(rng.integers(1, 5))
        d_out = int(rng.integers(1, 5))
        x = rng.normal(size=(rows, d_in))
        w = rng.normal(size=(d_out, d_in))
        b = rng.normal(size=d_out)
        weights = rng.normal(size=(rows, d_out))

        def proj_loss() -> float:
            return float((weights * dense_forward(x, w, b)).sum())

        d_x, d_w, d_b = dense_backward(x, w, weights)
        assert max_relative_error(d_x, finite_diff_grad(proj_loss, x)) <= GRAD_TOL
        assert max_relative_error(d_w, finite_diff_grad(proj_loss, w)) <= GRAD_TOL
        assert max_relative_error(d_b, finite_diff_grad(proj_loss, b)) <= GRAD_TOL

    # CRF negative log-likelihood.
    for _ in range(50):
        params, emissions = _random_crf_instance(rng)
        legal = enumerate_legal_paths(
            emissions.shape[0], params.start_legal, params.trans_legal
        )
        gold = legal[int(rng.integers(0, legal.shape[0]))]
        tensors = {
            "emissions": emissions,
            "transitions": params.transitions,
            "start": params.start,
            "stop": params.stop,
        }

        def crf_loss() -> float:
            nll, _, _ = crf_nll_grad(params, emissions, gold)
            return nll

        _, d_emissions, grads = crf_nll_grad(params, emissions, gold)
        analytic = {
            "emissions": d_emissions,
            "transitions": grads["transitions"],
            "start": grads["start"],
            "stop": grads["stop"],
        }
        assert (
            max_relative_error(analytic, finite_diff_grad(crf_loss, tensors))
            <= GRAD_TOL
        )

    # Full stacked model on a tiny configuration.
    config = ModelConfig(
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
    )
    cases = (
        (("chest", "pain", "today"), ("B-a", "I-a", "O")),
        (("gave", "aspirin"), ("O", "B-a")),
        (("pain",), ("B-a",)),
    )
    for inst, (tokens, tags) in enumerate(cases):
        bundle = init_model(config, seed=inst + 1)
        provider = HashEmbeddingProvider(5, seed=9 + inst)
        feats = assemble_features(tokens, 0, provider, 7)
        gold = tags_to_indices(("a",), tags)

        def stack_loss() -> float:
            nll, _ = sentence_nll_grads(bundle, feats, gold, False, None)
            return nll

        _, grads = sentence_nll_grads(bundle, feats, gold, False, None)
        numeric = finite_diff_grad(stack_loss, bundle.params)
        assert max_relative_error(grads, numeric) <= GRAD_TOL

    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0
    print(f"PASS: gradient suite (50 instances per layer, {elapsed:.1f}s)")


def test_golden_examples():
    config = default_relabel_config()
    got, shifts = relabel_sentence(
        ("a", "bacterial", "superinfection"),
        ("B-problem", "I-problem", "I-problem"),
        config,
    )
    assert got == ("O", "B-problem", "I-problem")
    assert shifts == 1
    got, shifts = relabel_sentence(
        ("Patient", "'s", "neurologic", "exam"),
        ("B-test", "I-test", "I-test", "I-test"),
        config,
    )
    assert got == ("O", "O", "B-test", "I-test")
    assert shifts == 2

    lower = np.zeros(8)
    lower[6] = 1.0
    assert np.array_equal(format_onehot("a"), lower)
    alnum = np.zeros(8)
    alnum[5] = 1.0
    assert np.array_equal(format_onehot("c5-6"), alnum)
    print("PASS: golden examples (relabel rows and writing-format vectors exact)")


def test_structural_roundtrips():
    rng = np.random.default_rng(4242)
    for _ in range(1000):
        corpus = random_corpus(rng)
        assert parse_conll(write_conll(corpus)) == corpus
        for si, sent in enumerate(corpus.sentences):
            spans = iob_to_spans(sent.tags, si)
            assert spans_to_iob(len(sent.tokens), spans) == sent.tags

    pool = (
        "fever", "cough", "lasix", "aspirin", "scan", "panel", "left", "right",
        "chest", "acute", "mild", "daily", "exam", "note", "plan", "onset",
    )
    for _ in range(1000):
        corpus = random_corpus(rng)
        stop = rng.choice(pool, size=int(rng.integers(0, 6)), replace=False)
        freq = rng.choice(pool, size=int(rng.integers(0, 6)), replace=False)
        config = build_relabel_config(stop.tolist(), freq.tolist(), [])
        once, _ = relabel_corpus(corpus, config)
        twice, again = relabel_corpus(once, config)
        assert twice == once
        assert again.entities_shifted == 0
        for before, after in zip(corpus.sentences, once.sentences):
            old = iob_to_spans(before.tags)
            new = iob_to_spans(after.tags)
            assert len(new) == len(old)
            assert [s.label for s in new] == [s.label for s in old]
            assert [s.end for s in new] == [s.end for s in old]
    print("PASS: structural roundtrips (1000 corpora, 1000 relabel pairs)")


@pytest.fixture(scope="module")
def seed_ensemble(tmp_path_factory):
    """Five models trained from seeds 1..5 on one 60-sentence corpus."""
    tmp = tmp_path_factory.mktemp("acceptance")
    corpus = make_synthetic_corpus(60, seed=1234)
    train_file = tmp / "train.conll"
    train_file.write_text(write_conll(corpus), encoding="utf-8")
    models, reports, seconds = {}, {}, {}
    for seed in range(1, 6):
        model = tmp / f"model_{seed}.bin"
        report = tmp / f"report_{seed}.json"
        t0 = time.perf_counter()
        code = run(
            [
                "train",
                "--train", str(train_file),
                "--val", str(train_file),
                "--embeddings", "hash:64:101",
                "--model-out", str(model),
                "--report-out", str(report),
                "--seed", str(seed),
                "--epochs", "200",
                "--units1", "32",
                "--units2", "16",
                "--patience", "8",
            ]
        )
        seconds[seed] = time.perf_counter() - t0
        assert code == 0
        models[seed] = model
        reports[seed] = json.loads(report.read_text(encoding="utf-8"))
    return {
        "dir": tmp,
        "train_file": train_file,
        "models": models,
        "reports": reports,
        "seconds": seconds,
    }


def _tag_with(setup, seed: int, out_name: str):
    out = setup["dir"] / out_name
    code = run(
        [
            "tag",
            "--model", str(setup["models"][seed]),
            "--input", str(setup["train_file"]),
            "--embeddings", "hash:64:101",
            "--out", str(out),
        ]
    )
    assert code == 0
    return out


def test_synthetic_end_to_end(seed_ensemble):
    report = seed_ensemble["reports"][1]
    assert report["epochs_run"] <= 200
    assert seed_ensemble["seconds"][1] < 300.0

    pred_file = _tag_with(seed_ensemble, 1, "e2e_pred.conll")
    pred = parse_conll(pred_file.read_text(encoding="utf-8"))
    assert all(validate_iob(sent.tags) == [] for sent in pred.sentences)

    eval_file = seed_ensemble["dir"] / "e2e_eval.json"
    code = run(
        [
            "eval",
            "--gold", str(seed_ensemble["train_file"]),
            "--pred", str(pred_file),
            "--out", str(eval_file),
        ]
    )
    assert code == 0
    payload = json.loads(eval_file.read_text(encoding="utf-8"))
    f1 = payload["avg/total"]["f1"]
    assert f1 >= 0.99
    print(
        f"PASS: synthetic end-to-end (micro F1 {f1:.4f}, "
        f"{report['epochs_run']} epochs, {seed_ensemble['seconds'][1]:.1f}s)"
    )


def test_ensemble_vote_properties(seed_ensemble):
    pred_files = [
        _tag_with(seed_ensemble, seed, f"ens_pred_{seed}.conll")
        for seed in range(1, 6)
    ]
    voted_twice = []
    for name in ("voted_a.conll", "voted_b.conll"):
        out = seed_ensemble["dir"] / name
        code = run(["vote", *map(str, pred_files), "--out", str(out)])
        assert code == 0
        voted_twice.append(out.read_bytes())
    assert voted_twice[0] == voted_twice[1]

    voted = parse_conll(voted_twice[0].decode("utf-8"))
    preds = [parse_conll(pf.read_text(encoding="utf-8")) for pf in pred_files]
    majority_tokens = 0
    for si, sent in enumerate(voted.sentences):
        assert validate_iob(sent.tags) == []
        for ti, tag in enumerate(sent.tags):
            votes = Counter(p.sentences[si].tags[ti] for p in preds)
            top, count = votes.most_common(1)[0]
            if count >= 3:
                majority_tokens += 1
                assert tag == top
    assert majority_tokens > 0
    print(
        f"PASS: ensemble vote ({majority_tokens} majority tokens honored, "
        "valid IOB, deterministic)"
    )


def test_determinism(tmp_path):
    corpus = make_synthetic_corpus(12, seed=7)
    train_file = tmp_path / "train.conll"
    train_file.write_text(write_conll(corpus), encoding="utf-8")
    blobs = []
    for name in ("first.bin", "second.bin"):
        model = tmp_path / name
        code = run(
            [
                "train",
                "--train", str(train_file),
                "--embeddings", "hash:32:5",
                "--model-out", str(model),
                "--seed", "3",
                "--epochs", "6",
                "--units1", "16",
                "--units2", "8",
            ]
        )
        assert code == 0
        blobs.append(model.read_bytes())
    assert blobs[0] == blobs[1]

    bundle = load_model(blobs[0])
    blob = save_model(bundle)
    assert blob == blobs[0]
    twin = load_model(blob)
    provider = HashEmbeddingProvider(32, seed=5)
    check = make_synthetic_corpus(20, seed=99)
    for i, sent in enumerate(check.sentences):
        assert predict(bundle, sent.tokens, provider, i) == predict(
            twin, sent.tokens, provider, i
        )
    print(
        "PASS: determinism (train-twice bitwise, save/load roundtrip, "
        "20-sentence behavioral equality)"
    )
