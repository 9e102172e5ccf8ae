#!/usr/bin/env python3
"""Seed-ensemble experiment on the synthetic corpus.

Trains M taggers from consecutive seeds, tags the corpus with each, majority
votes the predictions, and prints per-model and ensemble entity scores.

Usage: python scripts/run_synthetic_experiment.py [--ensemble-size 5]
       [--sentences 60] [--seed 1234] [--epochs 200] [--patience 8]
"""

import argparse

from seqlab.corpus import Sentence, TaggedCorpus
from seqlab.ensemble import majority_vote
from seqlab.evaluation import entity_prf, format_report
from seqlab.features import HashEmbeddingProvider
from seqlab.synthetic import make_synthetic_corpus
from seqlab.tagger import ModelConfig, init_model, predict_corpus, train


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--ensemble-size", type=int, default=5)
    parser.add_argument("--sentences", type=int, default=60)
    parser.add_argument("--seed", type=int, default=1234)
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--patience", type=int, default=8)
    args = parser.parse_args()

    corpus = make_synthetic_corpus(args.sentences, args.seed)
    provider = HashEmbeddingProvider(64, seed=101)
    predictions = []
    for model_seed in range(1, args.ensemble_size + 1):
        config = ModelConfig(
            word_dim=64, label_set=corpus.label_set, bilstm1_units=32,
            bilstm2_units=16, epochs=args.epochs, rng_seed=model_seed,
        )
        bundle = init_model(config)
        report = train(bundle, corpus, provider, validation=corpus,
                       patience=args.patience)
        predicted = predict_corpus(bundle, corpus, provider)
        predictions.append(predicted)
        score = entity_prf(corpus, predicted).micro.f1
        print(f"seed {model_seed}: {report.epochs_run} epochs, "
              f"micro F1 {score:.4f}")

    voted_sentences = []
    for i, sent in enumerate(corpus.sentences):
        votes = [p.sentences[i].tags for p in predictions]
        voted_sentences.append(Sentence(sent.tokens, majority_vote(votes)))
    voted = TaggedCorpus(tuple(voted_sentences), corpus.label_set)
    print("\nensemble:")
    print(format_report(entity_prf(corpus, voted)))


if __name__ == "__main__":
    main()
