"""Command-line interface.

Subcommands cover the full workflow: ``ingest`` (report + concepts to
CoNLL), ``relabel``, ``stats``, ``train``, ``tag``, ``eval``, ``vote``, and
``selftest``.  Every subcommand is deterministic given ``--seed``; errors
are reported on stderr with a nonzero exit code and never truncate output
files silently.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .corpus import (
    ParseError,
    TaggedCorpus,
    corpus_stats,
    parse_conll,
    parse_i2b2,
    spans_to_iob,
    write_conll,
    Sentence,
)
from .ensemble import majority_vote
from .evaluation import entity_prf, format_report, report_json, token_accuracy
from .features import (
    EmbeddingFormatError,
    HashEmbeddingProvider,
    MissingVectorError,
    WordVectorProvider,
    load_embedding_file,
)
from .relabel import (
    build_relabel_config,
    default_relabel_config,
    load_word_list,
    relabel_corpus,
)
from .tagger import (
    ModelConfig,
    ModelFormatError,
    TrainingDiverged,
    attach_lookup_table,
    init_model,
    lookup_provider,
    predict_corpus,
    read_model,
    train,
    write_model,
)

_CONFIG_FLAGS = {
    "epochs": "epochs",
    "lr": "learning_rate",
    "units1": "bilstm1_units",
    "units2": "bilstm2_units",
    "dropout": "dropout",
    "bilstm_dropout": "bilstm_dropout",
    "d_ce": "d_ce",
    "n_filters": "n_filters",
    "l_char": "l_char",
    "max_word_len": "max_word_len",
}


def _read_text(path: str) -> str:
    with open(path, encoding="utf-8") as handle:
        return handle.read()


def _write_output(text: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(text)


def _parse_embedding_spec(
    spec: str,
) -> tuple[str, dict]:
    """Split an --embeddings value into (kind, details).

    Grammar: ``file:<path>`` | ``hash:<dim>:<seed>`` | ``lookup[:<dim>]``.
    """
    parts = spec.split(":")
    if parts[0] == "file" and len(parts) == 2 and parts[1]:
        return "file", {"path": parts[1]}
    if parts[0] == "hash" and len(parts) == 3:
        try:
            return "hash", {"dim": int(parts[1]), "seed": int(parts[2])}
        except ValueError:
            pass
    if parts[0] == "lookup" and len(parts) == 1:
        return "lookup", {"dim": None}
    if parts[0] == "lookup" and len(parts) == 2:
        try:
            return "lookup", {"dim": int(parts[1])}
        except ValueError:
            pass
    raise ValueError(
        f"bad --embeddings spec {spec!r}; expected file:<path>, "
        f"hash:<dim>:<seed>, or lookup:<dim>"
    )


def _build_provider(kind: str, details: dict) -> WordVectorProvider | None:
    if kind == "file":
        return load_embedding_file(details["path"])
    if kind == "hash":
        return HashEmbeddingProvider(details["dim"], details["seed"])
    return None  # lookup providers attach to a bundle later


def _resolve_model_config(args: argparse.Namespace, word_dim: int, label_set) -> ModelConfig:
    """Defaults, then --config JSON, then explicit flags."""
    values: dict = {"word_dim": word_dim, "label_set": tuple(label_set)}
    if args.config is not None:
        with open(args.config, encoding="utf-8") as handle:
            loaded = json.load(handle)
        known = {f.name for f in dataclasses.fields(ModelConfig)}
        unknown = set(loaded) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)} in {args.config}")
        values.update(loaded)
        if "label_set" in loaded:
            values["label_set"] = tuple(loaded["label_set"])
        if "kernel_widths" in loaded:
            values["kernel_widths"] = tuple(loaded["kernel_widths"])
    for flag, field_name in _CONFIG_FLAGS.items():
        flag_value = getattr(args, flag)
        if flag_value is not None:
            values[field_name] = flag_value
    if args.labels is not None:
        values["label_set"] = tuple(args.labels.split(","))
    if args.seed is not None:
        values["rng_seed"] = args.seed
    values["word_dim"] = word_dim
    return ModelConfig(**values)


def _load_relabel_cfg(path: str | None):
    if path is None:
        return default_relabel_config()
    import os

    with open(path, encoding="utf-8") as handle:
        spec = json.load(handle)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(key: str) -> list[str]:
        if key not in spec:
            return []
        return load_word_list(os.path.join(base, spec[key]))

    return build_relabel_config(
        resolve("stopwords"), resolve("frequent_words"), resolve("abbreviations")
    )


def _cmd_ingest(args: argparse.Namespace) -> int:
    report = _read_text(args.report)
    concepts = _read_text(args.concepts)
    doc = parse_i2b2(report, concepts)
    for warning in doc.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    by_sentence: dict[int, list] = {}
    for span in doc.spans:
        by_sentence.setdefault(span.sentence_index, []).append(span)
    label_set: list[str] = []
    for span in doc.spans:
        if span.label not in label_set:
            label_set.append(span.label)
    sentences = []
    for i, tokens in enumerate(doc.sentences):
        if not tokens:
            continue  # blank report lines cannot carry tokens or spans
        tags = spans_to_iob(len(tokens), by_sentence.get(i, []))
        sentences.append(Sentence(tokens, tags))
    corpus = TaggedCorpus(tuple(sentences), tuple(label_set))
    _write_output(write_conll(corpus), args.out)
    return 0


def _cmd_relabel(args: argparse.Namespace) -> int:
    corpus = parse_conll(_read_text(args.input))
    config = _load_relabel_cfg(args.relabel_config)
    relabeled, summary = relabel_corpus(corpus, config)
    _write_output(write_conll(relabeled), args.out)
    summary_json = json.dumps(
        {
            "b_to_o": summary.b_to_o,
            "i_to_b": summary.i_to_b,
            "entities_shifted": summary.entities_shifted,
        },
        indent=2,
        sort_keys=True,
    )
    if args.summary is not None:
        _write_output(summary_json + "\n", args.summary)
    else:
        print(summary_json, file=sys.stderr)
    return 0


def _cmd_stats(args: argparse.Namespace) -> int:
    stats = corpus_stats(parse_conll(_read_text(args.input)))
    payload = {
        "tag_distribution": stats.tag_distribution,
        "entity_counts": stats.entity_counts,
        "length_histogram": {str(k): v for k, v in sorted(stats.length_histogram.items())},
    }
    _write_output(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.out)
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    corpus = parse_conll(_read_text(args.train))
    validation = parse_conll(_read_text(args.val)) if args.val else None
    kind, details = _parse_embedding_spec(args.embeddings)
    provider = _build_provider(kind, details)
    if kind == "lookup":
        if details["dim"] is None:
            raise ValueError("training with a lookup table needs lookup:<dim>")
        word_dim = details["dim"]
    else:
        word_dim = provider.dim
    config = _resolve_model_config(args, word_dim, corpus.label_set)
    bundle = init_model(config)
    if kind == "lookup":
        provider = attach_lookup_table(bundle, corpus)
    report = train(
        bundle, corpus, provider, validation=validation, patience=args.patience
    )
    write_model(bundle, args.model_out)
    if args.report_out is not None:
        _write_output(
            json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n",
            args.report_out,
        )
    print(
        f"trained {report.epochs_run} epochs, final nll "
        f"{report.epoch_nll[-1]:.4f}, model written to {args.model_out}",
        file=sys.stderr,
    )
    return 0


def _cmd_tag(args: argparse.Namespace) -> int:
    bundle = read_model(args.model)
    corpus = parse_conll(_read_text(args.input))
    kind, details = _parse_embedding_spec(args.embeddings)
    if kind == "lookup":
        provider = lookup_provider(bundle)
        if details["dim"] is not None and details["dim"] != provider.dim:
            raise ValueError(
                f"lookup dim {details['dim']} != model table dim {provider.dim}"
            )
    else:
        provider = _build_provider(kind, details)
    if provider.dim != bundle.config.word_dim:
        raise ValueError(
            f"provider dim {provider.dim} != model word_dim {bundle.config.word_dim}"
        )
    _write_output(write_conll(predict_corpus(bundle, corpus, provider)), args.out)
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    gold = parse_conll(_read_text(args.gold))
    pred = parse_conll(_read_text(args.pred))
    report = entity_prf(gold, pred)
    payload = report_json(report)
    payload["token_accuracy"] = token_accuracy(gold, pred)
    print(format_report(report), file=sys.stderr)
    _write_output(json.dumps(payload, indent=2, sort_keys=True) + "\n", args.out)
    return 0


def _cmd_vote(args: argparse.Namespace) -> int:
    corpora = [parse_conll(_read_text(path)) for path in args.predictions]
    first = corpora[0]
    for path, corpus in zip(args.predictions[1:], corpora[1:]):
        if len(corpus.sentences) != len(first.sentences):
            raise ValueError(f"{path}: sentence count differs from {args.predictions[0]}")
        for i, (a, b) in enumerate(zip(first.sentences, corpus.sentences)):
            if a.tokens != b.tokens:
                raise ValueError(f"{path}: sentence {i} tokens differ")
    label_set: list[str] = []
    for corpus in corpora:
        for cls in corpus.label_set:
            if cls not in label_set:
                label_set.append(cls)
    sentences = []
    for i, sent in enumerate(first.sentences):
        votes = [corpus.sentences[i].tags for corpus in corpora]
        sentences.append(Sentence(sent.tokens, majority_vote(votes)))
    _write_output(
        write_conll(TaggedCorpus(tuple(sentences), tuple(label_set))), args.out
    )
    return 0


def _cmd_selftest(args: argparse.Namespace) -> int:
    from .selftest import run_all

    results = run_all(fast=args.fast)
    failed = False
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status}: {result.name} ({result.detail})")
        failed = failed or not result.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqlab",
        description="Clinical concept extraction with a BiLSTM-CRF tagger.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="report + concept annotations to CoNLL")
    p.add_argument("--report", required=True)
    p.add_argument("--concepts", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("relabel", help="shift entity starts past stopword prefixes")
    p.add_argument("--input", required=True)
    p.add_argument("--relabel-config", dest="relabel_config")
    p.add_argument("--out")
    p.add_argument("--summary")
    p.set_defaults(func=_cmd_relabel)

    p = sub.add_parser("stats", help="tag distribution and entity counts")
    p.add_argument("--input", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("train", help="train a tagger on a CoNLL corpus")
    p.add_argument("--train", required=True)
    p.add_argument("--val")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--model-out", dest="model_out", required=True)
    p.add_argument("--report-out", dest="report_out")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--labels")
    p.add_argument("--patience", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--units1", type=int)
    p.add_argument("--units2", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--bilstm-dropout", dest="bilstm_dropout", type=float)
    p.add_argument("--d-ce", dest="d_ce", type=int)
    p.add_argument("--n-filters", dest="n_filters", type=int)
    p.add_argument("--l-char", dest="l_char", type=int)
    p.add_argument("--max-word-len", dest="max_word_len", type=int)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("tag", help="tag a CoNLL corpus with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_tag)

    p = sub.add_parser("eval", help="entity-level scores, gold vs predictions")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("vote", help="majority-vote several prediction files")
    p.add_argument("predictions", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_vote)

    p = sub.add_parser("selftest", help="run the built-in oracle suites")
    p.add_argument("--fast", action="store_true")
    p.set_defaults(func=_cmd_selftest)
    return parser


def run(argv: list[str]) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        ParseError,
        EmbeddingFormatError,
        MissingVectorError,
        ModelFormatError,
        TrainingDiverged,
        ValueError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
