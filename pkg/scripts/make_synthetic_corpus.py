#!/usr/bin/env python3
"""Emit the synthetic training corpus as CoNLL text.

Usage: python scripts/make_synthetic_corpus.py [--n 60] [--seed 1234] [--out PATH]
"""

import argparse
import sys

from seqlab.corpus import write_conll
from seqlab.synthetic import make_synthetic_corpus


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=60)
    parser.add_argument("--seed", type=int, default=1234)
    parser.add_argument("--out")
    args = parser.parse_args()
    text = write_conll(make_synthetic_corpus(args.n, args.seed))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


if __name__ == "__main__":
    main()
