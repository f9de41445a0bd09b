"""Bidirectional LSTM encoder with softmax emissions and exact reverse-mode
gradients for every parameter, embedding rows included.

Gate order in the stacked weight block is input, forget, output, candidate.
The cell is the standard forget-gate variant without peepholes:

    i = sigma(W_i [x; h_prev] + b_i)        f = sigma(W_f [x; h_prev] + b_f)
    o = sigma(W_o [x; h_prev] + b_o)        g = tanh (W_g [x; h_prev] + b_g)
    c = f * c_prev + i * g                  h = o * tanh(c)

Both directions start from zero states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Sentence
from .embeddings import InputAssembly, assemble_window, assembly_backward


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def glorot(rng: np.random.Generator, rows: int, cols: int, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(rows, cols))


@dataclass
class LstmParams:
    """One direction's recurrent parameters.

    ``w`` stacks the four gate matrices as (4*hidden, input+hidden) and ``b``
    the biases as (4*hidden,); per-gate views are exposed as properties so
    each gate matrix reads as (hidden, input+hidden).
    """

    input_dim: int
    hidden_dim: int
    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        h, d = self.hidden_dim, self.input_dim
        if self.w.shape != (4 * h, d + h):
            raise ValueError(f"gate weight block must be {(4 * h, d + h)}, got {self.w.shape}")
        if self.b.shape != (4 * h,):
            raise ValueError(f"gate bias block must be ({4 * h},), got {self.b.shape}")

    @classmethod
    def init(cls, input_dim: int, hidden_dim: int, rng: np.random.Generator) -> "LstmParams":
        w = glorot(rng, 4 * hidden_dim, input_dim + hidden_dim,
                   input_dim + hidden_dim, hidden_dim)
        return cls(input_dim, hidden_dim, w, np.zeros(4 * hidden_dim))

    def _gate(self, k):
        h = self.hidden_dim
        return self.w[k * h:(k + 1) * h]

    def _bias(self, k):
        h = self.hidden_dim
        return self.b[k * h:(k + 1) * h]

    w_input = property(lambda self: self._gate(0))
    w_forget = property(lambda self: self._gate(1))
    w_output = property(lambda self: self._gate(2))
    w_candidate = property(lambda self: self._gate(3))
    b_input = property(lambda self: self._bias(0))
    b_forget = property(lambda self: self._bias(1))
    b_output = property(lambda self: self._bias(2))
    b_candidate = property(lambda self: self._bias(3))


@dataclass
class ProjectionParams:
    """Affine map from hidden vectors to label logits."""

    w_hy: np.ndarray
    b_y: np.ndarray

    def __post_init__(self):
        if self.w_hy.ndim != 2 or self.b_y.shape != (self.w_hy.shape[0],):
            raise ValueError("projection shapes inconsistent")

    @classmethod
    def init(cls, n_labels: int, hidden_width: int, rng: np.random.Generator) -> "ProjectionParams":
        w = glorot(rng, n_labels, hidden_width, hidden_width, n_labels)
        return cls(w, np.zeros(n_labels))


def _step(xc: np.ndarray, c_prev: np.ndarray, params: LstmParams):
    h_dim = params.hidden_dim
    a = params.w @ xc + params.b
    i = _sigmoid(a[0:h_dim])
    f = _sigmoid(a[h_dim:2 * h_dim])
    o = _sigmoid(a[2 * h_dim:3 * h_dim])
    g = np.tanh(a[3 * h_dim:4 * h_dim])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, i, f, o, g, tc


def lstm_cell(x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, params: LstmParams):
    """One recurrence step; returns (h, c)."""
    if x.shape != (params.input_dim,) or h_prev.shape != (params.hidden_dim,):
        raise ValueError("input or state dimension mismatch")
    xc = np.concatenate([x, h_prev])
    h, c, *_ = _step(xc, c_prev, params)
    return h, c


class DirectionCache:
    """Forward activations of one direction, in processing order."""

    __slots__ = ("xc", "i", "f", "o", "g", "c", "tc")

    def __init__(self, n, d, h):
        self.xc = np.empty((n, d + h))
        self.i = np.empty((n, h))
        self.f = np.empty((n, h))
        self.o = np.empty((n, h))
        self.g = np.empty((n, h))
        self.c = np.empty((n, h))
        self.tc = np.empty((n, h))


def _run_direction(inputs: np.ndarray, params: LstmParams):
    n = inputs.shape[0]
    d, h_dim = params.input_dim, params.hidden_dim
    cache = DirectionCache(n, d, h_dim)
    hidden = np.empty((n, h_dim))
    h = np.zeros(h_dim)
    c = np.zeros(h_dim)
    for t in range(n):
        xc = np.concatenate([inputs[t], h])
        cache.xc[t] = xc
        h, c_new, i, f, o, g, tc = _step(xc, c, params)
        cache.i[t], cache.f[t], cache.o[t], cache.g[t] = i, f, o, g
        cache.c[t], cache.tc[t] = c_new, tc
        hidden[t] = h
        c = c_new
    return hidden, cache


def _direction_backward(d_hidden: np.ndarray, cache: DirectionCache, params: LstmParams):
    n = d_hidden.shape[0]
    d, h_dim = params.input_dim, params.hidden_dim
    dw = np.zeros_like(params.w)
    db = np.zeros_like(params.b)
    d_inputs = np.empty((n, d))
    carry_h = np.zeros(h_dim)
    carry_c = np.zeros(h_dim)
    for t in range(n - 1, -1, -1):
        i, f, o, g = cache.i[t], cache.f[t], cache.o[t], cache.g[t]
        tc = cache.tc[t]
        c_prev = cache.c[t - 1] if t > 0 else np.zeros(h_dim)
        dh = d_hidden[t] + carry_h
        dc = carry_c + dh * o * (1.0 - tc * tc)
        da = np.concatenate([
            dc * g * i * (1.0 - i),
            dc * c_prev * f * (1.0 - f),
            dh * tc * o * (1.0 - o),
            dc * i * (1.0 - g * g),
        ])
        dw += np.outer(da, cache.xc[t])
        db += da
        dxc = params.w.T @ da
        d_inputs[t] = dxc[:d]
        carry_h = dxc[d:]
        carry_c = dc * f
    return dw, db, d_inputs


def bilstm_forward(inputs: np.ndarray, fwd: LstmParams, bwd: LstmParams) -> np.ndarray:
    """Hidden vectors h_t = [forward_t ; backward_t], shape (n, 2*hidden)."""
    if inputs.shape[0] == 0:
        raise ValueError("empty input sequence")
    h_fwd, _ = _run_direction(inputs, fwd)
    h_bwd_rev, _ = _run_direction(inputs[::-1], bwd)
    return np.concatenate([h_fwd, h_bwd_rev[::-1]], axis=1)


@dataclass
class EmissionMatrix:
    """Per-position label distributions; rows of ``probs`` sum to one."""

    probs: np.ndarray
    log_probs: np.ndarray

    @property
    def n(self) -> int:
        return self.probs.shape[0]

    @property
    def n_labels(self) -> int:
        return self.probs.shape[1]


def emissions(hidden: np.ndarray, proj: ProjectionParams) -> EmissionMatrix:
    """Row-wise stabilized softmax of the projected hidden vectors."""
    logits = hidden @ proj.w_hy.T + proj.b_y
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    denom = exp.sum(axis=1, keepdims=True)
    return EmissionMatrix(exp / denom, shifted - np.log(denom))


def label_score(em: EmissionMatrix, t: int, label: int) -> float:
    """Log-probability of a label at one position."""
    return float(em.log_probs[t, label])


class SentenceCache:
    """Everything the backward pass needs for one sentence."""

    __slots__ = ("sentence", "inputs", "fwd_cache", "bwd_cache", "hidden", "em")

    def __init__(self, sentence, inputs, fwd_cache, bwd_cache, hidden, em):
        self.sentence = sentence
        self.inputs = inputs
        self.fwd_cache = fwd_cache
        self.bwd_cache = bwd_cache
        self.hidden = hidden
        self.em = em


def forward_sentence(
    sentence: Sentence,
    assembly: InputAssembly,
    fwd: LstmParams,
    bwd: LstmParams,
    proj: ProjectionParams,
) -> SentenceCache:
    if len(sentence) == 0:
        raise ValueError("empty sentence")
    inputs = assemble_window(sentence, assembly)
    h_fwd, fwd_cache = _run_direction(inputs, fwd)
    h_bwd_rev, bwd_cache = _run_direction(inputs[::-1], bwd)
    hidden = np.concatenate([h_fwd, h_bwd_rev[::-1]], axis=1)
    return SentenceCache(sentence, inputs, fwd_cache, bwd_cache, hidden, emissions(hidden, proj))


@dataclass
class NetworkGrads:
    d_token: np.ndarray
    d_feats: list[np.ndarray]
    d_fwd_w: np.ndarray
    d_fwd_b: np.ndarray
    d_bwd_w: np.ndarray
    d_bwd_b: np.ndarray
    d_w_hy: np.ndarray
    d_b_y: np.ndarray


def backward(
    cache: SentenceCache,
    d_log_probs: np.ndarray,
    assembly: InputAssembly,
    fwd: LstmParams,
    bwd: LstmParams,
    proj: ProjectionParams,
) -> NetworkGrads:
    """Exact gradients of sum(d_log_probs * log y) for all network tensors.

    ``d_log_probs`` is the upstream gradient at the per-position label
    log-probabilities, shape (n, n_labels).
    """
    if d_log_probs.shape != cache.em.log_probs.shape:
        raise ValueError("upstream gradient shape mismatch")
    probs = cache.em.probs
    # d log y / d logits folds the softmax normalizer back in.
    d_logits = d_log_probs - probs * d_log_probs.sum(axis=1, keepdims=True)
    d_w_hy = d_logits.T @ cache.hidden
    d_b_y = d_logits.sum(axis=0)
    d_hidden = d_logits @ proj.w_hy

    h_dim = fwd.hidden_dim
    d_fwd_w, d_fwd_b, d_in_fwd = _direction_backward(d_hidden[:, :h_dim], cache.fwd_cache, fwd)
    d_bwd_w, d_bwd_b, d_in_bwd_rev = _direction_backward(
        d_hidden[:, h_dim:][::-1], cache.bwd_cache, bwd
    )
    d_inputs = d_in_fwd + d_in_bwd_rev[::-1]
    d_token, d_feats = assembly_backward(d_inputs, cache.sentence, assembly)
    return NetworkGrads(d_token, d_feats, d_fwd_w, d_fwd_b, d_bwd_w, d_bwd_b, d_w_hy, d_b_y)
