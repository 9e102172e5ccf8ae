"""Linear-chain CRF over IOB tag sequences, computed in log space.

A sequence of per-token emission scores [T, K] is combined with transition,
start, and stop scores into path scores

    score(y) = start[y_0] + sum_t emis[t, y_t] + sum_t trans[y_{t-1}, y_t]
             + stop[y_{T-1}]

Structurally impossible IOB transitions (starting at I-x, O -> I-x, or
B-x/I-x -> I-y for y != x) are masked to -inf rather than merely penalized,
so no probability mass ever reaches an invalid sequence.  All recursions use
log-sum-exp; Viterbi breaks score ties toward the lower tag index at every
backtrack step.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import iob_tags


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    """log(sum(exp(a))) along ``axis``, exact for rows that are all -inf."""
    m = np.max(a, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        return np.log(np.sum(np.exp(a - safe), axis=axis)) + np.squeeze(safe, axis=axis)


@dataclass
class CrfParams:
    """Scores and legality masks of one CRF.

    transitions[j, k] scores moving from tag j to tag k; start/stop score
    the first and last tag of a path.  The boolean masks mark which starts
    and transitions are structurally allowed; masked-out entries contribute
    -inf to every path regardless of their stored score.
    """

    transitions: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    start_legal: np.ndarray
    trans_legal: np.ndarray

    def __post_init__(self) -> None:
        k = self.start.shape[0]
        if self.transitions.shape != (k, k):
            raise ValueError(f"transitions shape {self.transitions.shape} != ({k}, {k})")
        if self.stop.shape != (k,) or self.start_legal.shape != (k,):
            raise ValueError("start/stop/mask shapes disagree")
        if self.trans_legal.shape != (k, k):
            raise ValueError(f"trans_legal shape {self.trans_legal.shape} != ({k}, {k})")

    @property
    def n_tags(self) -> int:
        return self.start.shape[0]

    def masked_transitions(self) -> np.ndarray:
        return np.where(self.trans_legal, self.transitions, -np.inf)

    def masked_start(self, emissions_row: np.ndarray) -> np.ndarray:
        return np.where(self.start_legal, self.start + emissions_row, -np.inf)


def transition_mask(label_set: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
    """Start and transition legality for the IOB tag set of ``label_set``.

    Tag order is O, then B-x, I-x per class.  I-x may not start a sequence
    and may only follow B-x or I-x of the same class.
    """
    tags = iob_tags(label_set)
    k = len(tags)
    start_legal = np.array([not t.startswith("I-") for t in tags], dtype=bool)
    trans_legal = np.ones((k, k), dtype=bool)
    for dst, dst_tag in enumerate(tags):
        if not dst_tag.startswith("I-"):
            continue
        cls = dst_tag[2:]
        for src, src_tag in enumerate(tags):
            trans_legal[src, dst] = src_tag in (f"B-{cls}", f"I-{cls}")
    return start_legal, trans_legal


def fully_legal_mask(n_tags: int) -> tuple[np.ndarray, np.ndarray]:
    """Masks that allow every start and every transition (generic chains)."""
    return np.ones(n_tags, dtype=bool), np.ones((n_tags, n_tags), dtype=bool)


def path_score(params: CrfParams, emissions: np.ndarray, tags: np.ndarray) -> float:
    """Unnormalized log score of one tag index sequence.

    Accumulates left to right in the same order as the forward and Viterbi
    recursions, so a path's score here is bitwise identical to the score
    those recursions assign it.  Raises ValueError on an illegal sequence.
    """
    t_len = emissions.shape[0]
    if len(tags) != t_len:
        raise ValueError(f"{len(tags)} tags for {t_len} emission rows")
    if not params.start_legal[tags[0]]:
        raise ValueError(f"illegal start tag index {tags[0]}")
    score = params.start[tags[0]] + emissions[0, tags[0]]
    for t in range(1, t_len):
        if not params.trans_legal[tags[t - 1], tags[t]]:
            raise ValueError(f"illegal transition {tags[t - 1]} -> {tags[t]} at {t}")
        score = (score + params.transitions[tags[t - 1], tags[t]]) + emissions[t, tags[t]]
    return float(score + params.stop[tags[-1]])


def _forward(params: CrfParams, emissions: np.ndarray) -> np.ndarray:
    t_len = emissions.shape[0]
    trans = params.masked_transitions()
    alphas = np.empty_like(emissions)
    alphas[0] = params.masked_start(emissions[0])
    for t in range(1, t_len):
        alphas[t] = _logsumexp(alphas[t - 1][:, None] + trans, axis=0) + emissions[t]
    return alphas


def _backward(params: CrfParams, emissions: np.ndarray) -> np.ndarray:
    t_len = emissions.shape[0]
    trans = params.masked_transitions()
    betas = np.empty_like(emissions)
    betas[-1] = params.stop
    for t in range(t_len - 2, -1, -1):
        betas[t] = _logsumexp(trans + (emissions[t + 1] + betas[t + 1])[None, :], axis=1)
    return betas


def log_partition(params: CrfParams, emissions: np.ndarray) -> float:
    """log sum over all legal paths of exp(path score)."""
    if emissions.ndim != 2 or emissions.shape[0] < 1:
        raise ValueError(f"emissions must be [T >= 1, K], got {emissions.shape}")
    if emissions.shape[1] != params.n_tags:
        raise ValueError(
            f"emissions width {emissions.shape[1]} != {params.n_tags} tags"
        )
    alphas = _forward(params, emissions)
    log_z = float(_logsumexp((alphas[-1] + params.stop)[None, :], axis=1)[0])
    if not np.isfinite(log_z):
        raise ValueError("no legal path exists under the mask")
    return log_z


def marginals(params: CrfParams, emissions: np.ndarray) -> np.ndarray:
    """Posterior tag probabilities P(y_t = k), shape [T, K].

    Rows sum to 1; tags that are illegal at a position get exactly 0.
    """
    alphas = _forward(params, emissions)
    betas = _backward(params, emissions)
    log_z = float(_logsumexp((alphas[-1] + params.stop)[None, :], axis=1)[0])
    if not np.isfinite(log_z):
        raise ValueError("no legal path exists under the mask")
    return np.exp(alphas + betas - log_z)


def crf_nll_grad(
    params: CrfParams, emissions: np.ndarray, gold: np.ndarray
) -> tuple[float, np.ndarray, dict[str, np.ndarray]]:
    """Negative log likelihood of ``gold`` and its exact gradients.

    nll = log_partition - path_score(gold) >= 0.  Gradients are posterior
    expectations minus gold indicator counts:

        d emis[t, k]  = P(y_t = k) - [gold_t = k]
        d trans[j, k] = sum_t P(y_t = j, y_{t+1} = k) - #{gold j -> k}
        d start[k]    = P(y_0 = k) - [gold_0 = k]
        d stop[k]     = P(y_T = k) - [gold_T = k]

    Masked-out transitions carry zero gradient.  Returns
    (nll, d_emissions, {'transitions', 'start', 'stop'}).
    """
    t_len, k = emissions.shape
    gold = np.asarray(gold)
    gold_score = path_score(params, emissions, gold)  # validates legality
    alphas = _forward(params, emissions)
    betas = _backward(params, emissions)
    log_z = float(_logsumexp((alphas[-1] + params.stop)[None, :], axis=1)[0])
    if not np.isfinite(log_z):
        raise ValueError("no legal path exists under the mask")
    nll = log_z - gold_score

    unary = np.exp(alphas + betas - log_z)
    d_emissions = unary.copy()
    d_emissions[np.arange(t_len), gold] -= 1.0

    d_trans = np.zeros((k, k))
    trans = params.masked_transitions()
    for t in range(t_len - 1):
        log_pair = (
            alphas[t][:, None]
            + trans
            + (emissions[t + 1] + betas[t + 1])[None, :]
            - log_z
        )
        d_trans += np.exp(log_pair)
        d_trans[gold[t], gold[t + 1]] -= 1.0

    d_start = unary[0].copy()
    d_start[gold[0]] -= 1.0
    d_stop = unary[-1].copy()
    d_stop[gold[-1]] -= 1.0
    return nll, d_emissions, {"transitions": d_trans, "start": d_start, "stop": d_stop}


def viterbi(params: CrfParams, emissions: np.ndarray) -> tuple[np.ndarray, float]:
    """Highest-scoring legal path and its score.

    Ties are broken toward the lower tag index both at the final tag and at
    every backtrack step (np.argmax returns the first maximum).
    """
    t_len, k = emissions.shape
    if k != params.n_tags:
        raise ValueError(f"emissions width {k} != {params.n_tags} tags")
    trans = params.masked_transitions()
    delta = params.masked_start(emissions[0])
    backpointers = np.zeros((t_len, k), dtype=np.int64)
    for t in range(1, t_len):
        scores = delta[:, None] + trans  # [from, to]
        best_prev = np.argmax(scores, axis=0)
        delta = scores[best_prev, np.arange(k)] + emissions[t]
        backpointers[t] = best_prev
    final = delta + params.stop
    last = int(np.argmax(final))
    best_score = float(final[last])
    if not np.isfinite(best_score):
        raise ValueError("no legal path exists under the mask")
    path = np.zeros(t_len, dtype=np.int64)
    path[-1] = last
    for t in range(t_len - 1, 0, -1):
        path[t - 1] = backpointers[t, path[t]]
    return path, best_score
