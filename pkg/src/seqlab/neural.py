"""Minimal float64 neural kernel with hand-derived backward passes.

Everything here is plain numpy.  Each layer exposes a forward function that
returns its output plus whatever intermediate values the matching backward
function needs.  Backward passes are written out by hand against the forward
definitions; ``finite_diff_grad`` provides the independent central-difference
oracle the test suite checks them against.

Conventions: inputs are row-major float64, weight matrices are [out, in],
LSTM gate blocks are ordered input/forget/candidate/output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class NonFiniteGradient(RuntimeError):
    """Raised when an optimizer step sees a NaN or infinite gradient."""


def stable_sigmoid(x: np.ndarray) -> np.ndarray:
    """Logistic function computed without overflow for large |x|."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def glorot_uniform(
    rng: np.random.Generator, fan_in: int, fan_out: int, shape: tuple[int, ...]
) -> np.ndarray:
    """Uniform init in +-sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


# ---------------------------------------------------------------------------
# Affine projection


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """y = x w^T + b for x [T, D_in], w [D_out, D_in], b [D_out]."""
    return x @ w.T + b


def dense_backward(
    x: np.ndarray, w: np.ndarray, d_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of a summed loss through dense_forward.

    Returns (d_x, d_w, d_b): d_x = d_out w, d_w = d_out^T x, d_b = sum_t d_out.
    """
    return d_out @ w, d_out.T @ x, d_out.sum(axis=0)


# ---------------------------------------------------------------------------
# Valid 1-D convolution (single filter), the primitive under the char encoder


def conv1d_valid(x: np.ndarray, kernel: np.ndarray, bias: float) -> np.ndarray:
    """Single-filter valid convolution over time.

    x is [T, d], kernel [k, d]; output position t is
    ``bias + sum(x[t:t+k] * kernel)`` for t in 0..T-k, so the output has
    length T - k + 1.  Requires T >= k.
    """
    t_len, d = x.shape
    k = kernel.shape[0]
    if kernel.shape[1] != d:
        raise ValueError(f"kernel width {kernel.shape[1]} != input width {d}")
    if t_len < k:
        raise ValueError(f"input length {t_len} shorter than kernel size {k}")
    windows = np.lib.stride_tricks.sliding_window_view(x, k, axis=0)
    # windows is [T-k+1, d, k]; kernel.T matches that layout.
    return np.einsum("odk,dk->o", windows, kernel.T, optimize=False) + bias


def conv1d_valid_backward(
    x: np.ndarray, kernel: np.ndarray, d_out: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """Gradients through conv1d_valid: returns (d_x, d_kernel, d_bias).

    d_kernel[j] = sum_t d_out[t] * x[t+j]; d_x accumulates each window's
    contribution d_out[t] * kernel[j] at position t + j.
    """
    k = kernel.shape[0]
    d_x = np.zeros_like(x)
    d_kernel = np.zeros_like(kernel)
    for j in range(k):
        d_kernel[j] = d_out @ x[j : j + len(d_out)]
        d_x[j : j + len(d_out)] += np.outer(d_out, kernel[j])
    return d_x, d_kernel, float(d_out.sum())


# ---------------------------------------------------------------------------
# Inverted dropout


def dropout_mask(
    shape: tuple[int, ...], rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Pre-scaled keep mask: entries are 0 or 1/(1-rate).

    Multiplying by the mask implements inverted dropout, so the expected
    training-mode output equals the evaluation-mode output and inference
    needs no rescaling.  rate must lie in [0, 1).
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(shape) >= rate).astype(np.float64)
    return keep / (1.0 - rate)


# ---------------------------------------------------------------------------
# Character encoder: embed -> 3 conv widths -> tanh -> max-pool -> dense+tanh


@dataclass
class CharEncoderParams:
    """Parameters of the convolutional character encoder.

    embed [V, d_ce]; per width k a kernel bank [F, k, d_ce] and bias [F];
    dense maps the 3F pooled values to l_char outputs.
    """

    embed: np.ndarray
    kernels: dict[int, np.ndarray]
    biases: dict[int, np.ndarray]
    dense_w: np.ndarray
    dense_b: np.ndarray

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(sorted(self.kernels))


def init_char_encoder(
    rng: np.random.Generator,
    vocab_size: int,
    d_ce: int,
    n_filters: int,
    widths: tuple[int, ...],
    l_char: int,
) -> CharEncoderParams:
    embed = glorot_uniform(rng, vocab_size, d_ce, (vocab_size, d_ce))
    kernels = {}
    biases = {}
    for k in widths:
        kernels[k] = glorot_uniform(rng, k * d_ce, n_filters, (n_filters, k, d_ce))
        biases[k] = np.zeros(n_filters)
    pooled = n_filters * len(widths)
    dense_w = glorot_uniform(rng, pooled, l_char, (l_char, pooled))
    dense_b = np.zeros(l_char)
    return CharEncoderParams(embed, kernels, biases, dense_w, dense_b)


def char_encoder_batch_forward(
    chars: np.ndarray,
    params: CharEncoderParams,
    training: bool = False,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, dict]:
    """Encode a batch of char index rows [T, L] into vectors [T, l_char].

    Per width k: valid convolution of the embedded characters with every
    filter, tanh, then max over positions.  The pooled branches are
    concatenated, passed through a tanh dense layer, and (in training mode)
    an inverted-dropout mask.  Requires L >= max width.
    """
    t_len, l_len = chars.shape
    if l_len < max(params.widths):
        raise ValueError(
            f"word length {l_len} shorter than widest kernel {max(params.widths)}"
        )
    embedded = params.embed[chars]  # [T, L, d]
    d_ce = embedded.shape[2]
    cache: dict = {"chars": chars, "embedded": embedded, "branches": {}}
    pooled_parts = []
    for k in params.widths:
        windows = np.lib.stride_tricks.sliding_window_view(embedded, k, axis=1)
        # [T, L-k+1, d, k] -> [T, L-k+1, k*d]
        flat = windows.transpose(0, 1, 3, 2).reshape(t_len, l_len - k + 1, k * d_ce)
        kernel_mat = params.kernels[k].reshape(-1, k * d_ce)  # [F, k*d]
        act = np.tanh(flat @ kernel_mat.T + params.biases[k])  # [T, L-k+1, F]
        argmax = act.argmax(axis=1)  # [T, F], first max on ties
        pooled = np.take_along_axis(act, argmax[:, None, :], axis=1)[:, 0, :]
        cache["branches"][k] = {"flat": flat, "act": act, "argmax": argmax}
        pooled_parts.append(pooled)
    concat = np.concatenate(pooled_parts, axis=1)  # [T, 3F]
    pre = dense_forward(concat, params.dense_w, params.dense_b)
    out = np.tanh(pre)
    cache["concat"] = concat
    cache["out_pre_drop"] = out
    if training and dropout_rate > 0.0:
        if rng is None:
            raise ValueError("training-mode dropout needs an rng")
        mask = dropout_mask(out.shape, dropout_rate, rng)
        cache["drop_mask"] = mask
        out = out * mask
    else:
        cache["drop_mask"] = None
    return out, cache


def char_encoder_batch_backward(
    params: CharEncoderParams, cache: dict, d_out: np.ndarray
) -> dict[str, np.ndarray | dict[int, np.ndarray]]:
    """Gradients of the batched char encoder.

    Returns a dict with 'embed', 'kernels' (per width), 'biases' (per
    width), 'dense_w', 'dense_b'.  Max-pool routes gradient to the first
    argmax position; the embedding gradient scatter-adds over repeated
    indices.
    """
    if cache["drop_mask"] is not None:
        d_out = d_out * cache["drop_mask"]
    out = cache["out_pre_drop"]
    d_pre = d_out * (1.0 - out * out)  # tanh'
    concat = cache["concat"]
    d_concat, d_dense_w, d_dense_b = dense_backward(concat, params.dense_w, d_pre)

    embedded = cache["embedded"]
    t_len, l_len, d_ce = embedded.shape
    d_embedded = np.zeros_like(embedded)
    d_kernels: dict[int, np.ndarray] = {}
    d_biases: dict[int, np.ndarray] = {}
    offset = 0
    for k in params.widths:
        branch = cache["branches"][k]
        n_filters = params.kernels[k].shape[0]
        d_pooled = d_concat[:, offset : offset + n_filters]
        offset += n_filters
        act = branch["act"]
        d_act = np.zeros_like(act)
        np.put_along_axis(d_act, branch["argmax"][:, None, :], d_pooled[:, None, :], axis=1)
        d_lin = d_act * (1.0 - act * act)  # [T, L-k+1, F]
        flat = branch["flat"]
        kernel_mat = params.kernels[k].reshape(-1, k * d_ce)
        d_kernels[k] = np.einsum("tlm,tlf->fm", flat, d_lin).reshape(n_filters, k, d_ce)
        d_biases[k] = d_lin.sum(axis=(0, 1))
        d_flat = d_lin @ kernel_mat  # [T, L-k+1, k*d]
        d_windows = d_flat.reshape(t_len, l_len - k + 1, k, d_ce)
        for j in range(k):
            d_embedded[:, j : j + l_len - k + 1, :] += d_windows[:, :, j, :]
    d_embed = np.zeros_like(params.embed)
    np.add.at(d_embed, cache["chars"].ravel(), d_embedded.reshape(-1, d_ce))
    return {
        "embed": d_embed,
        "kernels": d_kernels,
        "biases": d_biases,
        "dense_w": d_dense_w,
        "dense_b": d_dense_b,
    }


def char_encoder_forward(
    chars: np.ndarray,
    params: CharEncoderParams,
    training: bool = False,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Encode one word's char index vector [L] into an [l_char] vector."""
    out, _ = char_encoder_batch_forward(
        chars[None, :], params, training, dropout_rate, rng
    )
    return out[0]


# ---------------------------------------------------------------------------
# LSTM


@dataclass
class LstmParams:
    """One direction's weights: w [4H, D], u [4H, H], b [4H].

    Gate blocks in order: input i, forget f, candidate g, output o.
    """

    w: np.ndarray
    u: np.ndarray
    b: np.ndarray

    @property
    def units(self) -> int:
        return self.u.shape[1]


def init_lstm(
    rng: np.random.Generator, input_dim: int, units: int
) -> LstmParams:
    """Glorot-uniform weights, zero biases except forget-gate bias +1."""
    w = glorot_uniform(rng, input_dim, 4 * units, (4 * units, input_dim))
    u = glorot_uniform(rng, units, 4 * units, (4 * units, units))
    b = np.zeros(4 * units)
    b[units : 2 * units] = 1.0
    return LstmParams(w, u, b)


def lstm_step(
    x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, params: LstmParams
) -> tuple[np.ndarray, np.ndarray]:
    """One LSTM cell update.

    z = w x + u h_prev + b splits into (i, f, g, o);
    c = sigm(f) * c_prev + sigm(i) * tanh(g); h = sigm(o) * tanh(c).
    """
    units = params.units
    z = params.w @ x + params.u @ h_prev + params.b
    i = stable_sigmoid(z[:units])
    f = stable_sigmoid(z[units : 2 * units])
    g = np.tanh(z[2 * units : 3 * units])
    o = stable_sigmoid(z[3 * units :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


def lstm_run(
    xs: np.ndarray, params: LstmParams, reverse: bool = False
) -> tuple[np.ndarray, dict]:
    """Run an LSTM over xs [T, D] from zero state; returns hs [T, H] + cache.

    With ``reverse`` the recurrence walks the sequence right to left but the
    output rows stay aligned with the input rows.
    """
    t_len = xs.shape[0]
    units = params.units
    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    wx = xs @ params.w.T + params.b  # [T, 4H]
    hs = np.zeros((t_len, units))
    cache = {
        "xs": xs,
        "order": list(order),
        "i": np.zeros((t_len, units)),
        "f": np.zeros((t_len, units)),
        "g": np.zeros((t_len, units)),
        "o": np.zeros((t_len, units)),
        "c": np.zeros((t_len, units)),
        "c_prev": np.zeros((t_len, units)),
        "h_prev": np.zeros((t_len, units)),
        "tanh_c": np.zeros((t_len, units)),
    }
    h = np.zeros(units)
    c = np.zeros(units)
    for t in cache["order"]:
        z = wx[t] + params.u @ h
        i = stable_sigmoid(z[:units])
        f = stable_sigmoid(z[units : 2 * units])
        g = np.tanh(z[2 * units : 3 * units])
        o = stable_sigmoid(z[3 * units :])
        cache["h_prev"][t] = h
        cache["c_prev"][t] = c
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        cache["i"][t], cache["f"][t], cache["g"][t], cache["o"][t] = i, f, g, o
        cache["c"][t] = c
        cache["tanh_c"][t] = tc
        hs[t] = h
    return hs, cache


def lstm_backward(
    params: LstmParams, cache: dict, d_hs: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Backpropagation through time for one LSTM direction.

    Walks the recurrence order of the forward pass in reverse, carrying the
    hidden- and cell-state gradients, and accumulates parameter gradients.
    Returns (d_xs, {'w', 'u', 'b'}).
    """
    units = params.units
    xs = cache["xs"]
    d_xs = np.zeros_like(xs)
    d_w = np.zeros_like(params.w)
    d_u = np.zeros_like(params.u)
    d_b = np.zeros_like(params.b)
    d_h = np.zeros(units)
    d_c = np.zeros(units)
    for t in reversed(cache["order"]):
        d_h = d_h + d_hs[t]
        i, f, g, o = cache["i"][t], cache["f"][t], cache["g"][t], cache["o"][t]
        tc = cache["tanh_c"][t]
        d_o = d_h * tc
        d_c = d_c + d_h * o * (1.0 - tc * tc)
        d_f = d_c * cache["c_prev"][t]
        d_i = d_c * g
        d_g = d_c * i
        d_c = d_c * f  # gradient for c_prev, carried to the earlier step
        d_z = np.concatenate(
            [
                d_i * i * (1.0 - i),
                d_f * f * (1.0 - f),
                d_g * (1.0 - g * g),
                d_o * o * (1.0 - o),
            ]
        )
        d_w += np.outer(d_z, xs[t])
        d_u += np.outer(d_z, cache["h_prev"][t])
        d_b += d_z
        d_xs[t] = params.w.T @ d_z
        d_h = params.u.T @ d_z
    return d_xs, {"w": d_w, "u": d_u, "b": d_b}


def bilstm_forward(
    xs: np.ndarray, fwd: LstmParams, bwd: LstmParams
) -> tuple[np.ndarray, dict]:
    """Bidirectional LSTM: output row t is [fwd h_t | bwd h_t], width 2H."""
    if fwd.units != bwd.units:
        raise ValueError(f"direction units differ: {fwd.units} vs {bwd.units}")
    hs_f, cache_f = lstm_run(xs, fwd, reverse=False)
    hs_b, cache_b = lstm_run(xs, bwd, reverse=True)
    return np.concatenate([hs_f, hs_b], axis=1), {"fwd": cache_f, "bwd": cache_b}


def bilstm_backward(
    fwd: LstmParams, bwd: LstmParams, cache: dict, d_out: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Split the output gradient by direction and run both BPTT passes."""
    units = fwd.units
    d_xs_f, grads_f = lstm_backward(fwd, cache["fwd"], d_out[:, :units])
    d_xs_b, grads_b = lstm_backward(bwd, cache["bwd"], d_out[:, units:])
    return d_xs_f + d_xs_b, grads_f, grads_b


def bilstm_apply(xs: np.ndarray, fwd: LstmParams, bwd: LstmParams) -> np.ndarray:
    out, _ = bilstm_forward(xs, fwd, bwd)
    return out


# ---------------------------------------------------------------------------
# Nadam


@dataclass
class NadamState:
    """Per-tensor first/second moments plus the shared step counter."""

    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def nadam_init(params: dict[str, np.ndarray]) -> NadamState:
    return NadamState(
        0,
        {k: np.zeros_like(p) for k, p in params.items()},
        {k: np.zeros_like(p) for k, p in params.items()},
    )


def nadam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: NadamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """In-place Nadam update over a named parameter dict.

    With t the incremented step counter and g the gradient:

        m = b1 m + (1-b1) g            v = b2 v + (1-b2) g^2
        m_hat = m / (1 - b1^t)         v_hat = v / (1 - b2^t)
        theta -= lr * (b1 m_hat + (1-b1) g / (1 - b1^t)) / (sqrt(v_hat) + eps)

    i.e. Adam with the bias-corrected momentum replaced by its Nesterov
    look-ahead.  Any non-finite gradient component aborts with
    NonFiniteGradient naming the tensor.
    """
    if set(grads) != set(params):
        missing = set(params) ^ set(grads)
        raise ValueError(f"gradient keys do not match parameters: {sorted(missing)}")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for tensor {name!r}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        update = (beta1 * m_hat + (1.0 - beta1) * g / bc1) / (np.sqrt(v_hat) + eps)
        params[name] -= lr * update


# ---------------------------------------------------------------------------
# Finite-difference oracle


def finite_diff_grad(
    loss_fn: Callable[[], float],
    params: dict[str, np.ndarray] | np.ndarray,
    eps: float = 1e-6,
) -> dict[str, np.ndarray] | np.ndarray:
    """Central-difference gradient of ``loss_fn`` with respect to ``params``.

    ``loss_fn`` takes no arguments and must read the same array objects
    passed here; each component is perturbed in place by +-eps and restored.
    Accepts a single array or a dict of named arrays and mirrors the input
    structure.
    """
    def grad_of(array: np.ndarray) -> np.ndarray:
        out = np.zeros_like(array)
        for idx in np.ndindex(array.shape):
            orig = array[idx]
            array[idx] = orig + eps
            hi = loss_fn()
            array[idx] = orig - eps
            lo = loss_fn()
            array[idx] = orig
            out[idx] = (hi - lo) / (2.0 * eps)
        return out

    if isinstance(params, np.ndarray):
        return grad_of(params)
    return {name: grad_of(arr) for name, arr in params.items()}


def max_relative_error(
    analytic: dict[str, np.ndarray] | np.ndarray,
    numeric: dict[str, np.ndarray] | np.ndarray,
) -> float:
    """max |a - n| / max(1, |a|, |n|) over all components of both structures."""
    def one(a: np.ndarray, n: np.ndarray) -> float:
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
        return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0

    if isinstance(analytic, np.ndarray):
        return one(analytic, numeric)
    return max(one(analytic[k], numeric[k]) for k in analytic)
