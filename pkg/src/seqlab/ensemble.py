"""Seed-ensemble combination: per-token majority vote plus IOB repair.

Models trained from different seeds vote per token.  A strict majority
always wins.  Ties are broken by the summed posterior marginals of the tied
tags when marginal matrices are supplied, and otherwise by the vote of the
lowest-indexed model among those voting for a tied tag.  Voting can break
IOB validity (an I-x may land after an incompatible tag), so a repair pass
rewrites every such orphan I-x to B-x, scanning left to right.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def repair_iob(tags: Sequence[str]) -> tuple[str, ...]:
    """Rewrite orphan I-x tags to B-x so the sequence satisfies IOB validity.

    The scan is left to right against the already-repaired prefix; valid
    sequences pass through unchanged.
    """
    out: list[str] = []
    prev = "O"
    for tag in tags:
        if tag.startswith("I-"):
            cls = tag[2:]
            if prev not in (f"B-{cls}", f"I-{cls}"):
                tag = f"B-{cls}"
        out.append(tag)
        prev = tag
    return tuple(out)


def vote_token(
    votes: Sequence[str],
    tag_order: Sequence[str] | None = None,
    marginal_rows: Sequence[np.ndarray] | None = None,
) -> str:
    """Combine one token's votes from M models into a single tag.

    A tag with strictly more votes than any other wins outright.  Among
    tied tags: with marginal rows present, the tag with the largest summed
    posterior wins; otherwise (or if the sums also tie exactly) the tag
    voted by the lowest-indexed model among the tied tags wins.
    """
    counts: dict[str, int] = {}
    for tag in votes:
        counts[tag] = counts.get(tag, 0) + 1
    top = max(counts.values())
    tied = [tag for tag, n in counts.items() if n == top]
    if len(tied) == 1:
        return tied[0]
    if marginal_rows is not None:
        if tag_order is None:
            raise ValueError("marginal tie-breaking needs tag_order")
        index = {tag: i for i, tag in enumerate(tag_order)}
        sums = {
            tag: sum(float(row[index[tag]]) for row in marginal_rows) for tag in tied
        }
        best = max(sums.values())
        tied = [tag for tag in tied if sums[tag] == best]
        if len(tied) == 1:
            return tied[0]
    tied_set = set(tied)
    for vote in votes:
        if vote in tied_set:
            return vote
    raise AssertionError("unreachable: tied tags always come from the votes")


def majority_vote(
    predictions: Sequence[Sequence[str]],
    tag_order: Sequence[str] | None = None,
    marginals: Sequence[np.ndarray] | None = None,
) -> tuple[str, ...]:
    """Vote M aligned tag sequences into one, then repair IOB validity.

    ``predictions`` holds one tag sequence per model, all the same length.
    ``marginals`` optionally holds one [T, K] posterior matrix per model
    (rows indexed by ``tag_order``) for tie-breaking.
    """
    if not predictions:
        raise ValueError("need at least one model's predictions")
    t_len = len(predictions[0])
    for m, seq in enumerate(predictions):
        if len(seq) != t_len:
            raise ValueError(
                f"model {m} predicts {len(seq)} tags, model 0 predicts {t_len}"
            )
    if marginals is not None:
        if len(marginals) != len(predictions):
            raise ValueError(
                f"{len(marginals)} marginal matrices for {len(predictions)} models"
            )
        for m, mat in enumerate(marginals):
            if mat.shape[0] != t_len:
                raise ValueError(f"model {m} marginals cover {mat.shape[0]} tokens")
    voted = []
    for t in range(t_len):
        votes = [seq[t] for seq in predictions]
        rows = [mat[t] for mat in marginals] if marginals is not None else None
        voted.append(vote_token(votes, tag_order, rows))
    return repair_iob(voted)
