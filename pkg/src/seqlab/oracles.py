"""Brute-force reference computations for the CRF layer.

These enumerate every legal tag sequence explicitly instead of using the
dynamic programs in :mod:`seqlab.crf`, and exist so the fast implementations
can be checked against something independently simple.  Feasible for small
problems only (roughly T <= 8, K <= 6).

Per-path scores are accumulated left to right in the same order as the
recursions so that score comparisons can be exact rather than approximate.
"""

from __future__ import annotations

import itertools
import math

import numpy as np


def enumerate_legal_paths(
    n_steps: int,
    start_legal: np.ndarray,
    trans_legal: np.ndarray,
) -> np.ndarray:
    """All legal tag index sequences as an array [n_paths, n_steps]."""
    n_tags = start_legal.shape[0]
    paths = np.array(
        list(itertools.product(range(n_tags), repeat=n_steps)), dtype=np.int64
    )
    keep = start_legal[paths[:, 0]].copy()
    for t in range(1, n_steps):
        keep &= trans_legal[paths[:, t - 1], paths[:, t]]
    return paths[keep]


def score_paths(
    paths: np.ndarray,
    transitions: np.ndarray,
    start: np.ndarray,
    stop: np.ndarray,
    emissions: np.ndarray,
) -> np.ndarray:
    """Score every path, accumulating in recursion order."""
    t_len = emissions.shape[0]
    scores = start[paths[:, 0]] + emissions[0, paths[:, 0]]
    for t in range(1, t_len):
        scores = (scores + transitions[paths[:, t - 1], paths[:, t]]) + emissions[
            t, paths[:, t]
        ]
    return scores + stop[paths[:, -1]]


def brute_force_log_partition(
    transitions: np.ndarray,
    start: np.ndarray,
    stop: np.ndarray,
    emissions: np.ndarray,
    start_legal: np.ndarray,
    trans_legal: np.ndarray,
) -> float:
    """log sum exp of all legal path scores via explicit enumeration."""
    paths = enumerate_legal_paths(emissions.shape[0], start_legal, trans_legal)
    if paths.shape[0] == 0:
        raise ValueError("no legal path exists under the mask")
    scores = score_paths(paths, transitions, start, stop, emissions)
    m = float(np.max(scores))
    return m + math.log(float(np.sum(np.exp(scores - m))))


def brute_force_best_path(
    transitions: np.ndarray,
    start: np.ndarray,
    stop: np.ndarray,
    emissions: np.ndarray,
    start_legal: np.ndarray,
    trans_legal: np.ndarray,
) -> tuple[np.ndarray, float]:
    """Highest-scoring legal path by enumeration.

    Among exactly-tied paths the winner is the one whose reversed index
    sequence is lexicographically smallest, which is the path a Viterbi
    backtrack with lowest-index tie-breaking selects.
    """
    paths = enumerate_legal_paths(emissions.shape[0], start_legal, trans_legal)
    if paths.shape[0] == 0:
        raise ValueError("no legal path exists under the mask")
    scores = score_paths(paths, transitions, start, stop, emissions)
    best = np.max(scores)
    tied = paths[scores == best]
    winner = min(tied.tolist(), key=lambda p: tuple(reversed(p)))
    return np.array(winner, dtype=np.int64), float(best)


def brute_force_marginals(
    transitions: np.ndarray,
    start: np.ndarray,
    stop: np.ndarray,
    emissions: np.ndarray,
    start_legal: np.ndarray,
    trans_legal: np.ndarray,
) -> np.ndarray:
    """Posterior P(y_t = k) by summing normalized path weights, shape [T, K]."""
    t_len, n_tags = emissions.shape
    paths = enumerate_legal_paths(t_len, start_legal, trans_legal)
    if paths.shape[0] == 0:
        raise ValueError("no legal path exists under the mask")
    scores = score_paths(paths, transitions, start, stop, emissions)
    m = float(np.max(scores))
    log_z = m + math.log(float(np.sum(np.exp(scores - m))))
    weights = np.exp(scores - log_z)
    out = np.zeros((t_len, n_tags))
    for t in range(t_len):
        out[t] = np.bincount(paths[:, t], weights=weights, minlength=n_tags)
    return out
