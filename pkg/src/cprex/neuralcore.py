"""Minimal dense-tensor engine with exact backpropagation.

Every op comes as a forward returning (output, cache) and a matching backward
consuming the upstream gradient plus the cache. No autograd graph: the two
model architectures in this package wire the ops by hand. All math is float64
by default; float32 is allowed in production mode via the `dtype` arguments.

Parameters live in plain dicts name -> ndarray, gradients in matching dicts,
which is what the Adam optimizer and the gradient-clipping helper consume.
"""

from __future__ import annotations

import math

import numpy as np


class NumericError(ValueError):
    """An op produced a NaN or Inf."""


def ensure_finite(name: str, *arrays):
    for arr in arrays:
        if not np.all(np.isfinite(arr)):
            raise NumericError("non-finite values in %s" % name)


# ---------------------------------------------------------------------------
# Elementwise and dense ops


def relu_forward(x):
    out = np.maximum(x, 0.0)
    return out, (x > 0.0)


def relu_backward(dout, cache):
    return dout * cache


def dense_forward(x, w, b):
    """out = x @ w + b; x is (in,) or (t, in), w is (in, out)."""
    out = x @ w + b
    ensure_finite("dense", out)
    return out, (x, w)


def dense_backward(dout, cache):
    x, w = cache
    if x.ndim == 1:
        dw = np.outer(x, dout)
        db = dout.copy()
    else:
        dw = x.T @ dout
        db = dout.sum(axis=0)
    dx = dout @ w.T
    return dx, dw, db


def conv1d_forward(x, w, b):
    """1-D convolution over a sequence.

    x: (seq_len, in_dim); w: (k, in_dim, out_dim); b: (out_dim,).
    out[t] = sum_j x[t + j] @ w[j] + b, for t in [0, seq_len - k].
    Sequences shorter than k are the caller's problem (pad first).
    """
    k = w.shape[0]
    seq_len = x.shape[0]
    if seq_len < k:
        raise ValueError("sequence of length %d is shorter than window %d" % (seq_len, k))
    n_out = seq_len - k + 1
    out = np.tile(b, (n_out, 1))
    for j in range(k):
        out += x[j:j + n_out] @ w[j]
    ensure_finite("conv1d", out)
    return out, (x, w)


def conv1d_backward(dout, cache):
    x, w = cache
    k = w.shape[0]
    n_out = dout.shape[0]
    dx = np.zeros_like(x)
    dw = np.zeros_like(w)
    for j in range(k):
        dw[j] = x[j:j + n_out].T @ dout
        dx[j:j + n_out] += dout @ w[j].T
    db = dout.sum(axis=0)
    return dx, dw, db


def max_over_time_forward(x):
    """Columnwise max over a (seq_len, dim) sequence. seq_len must be >= 1.
    On ties the first (lowest index) row receives the gradient."""
    if x.shape[0] < 1:
        raise ValueError("max-over-time pooling of an empty sequence")
    idx = np.argmax(x, axis=0)
    out = x[idx, np.arange(x.shape[1])]
    return out, (idx, x.shape)


def max_over_time_backward(dout, cache):
    idx, shape = cache
    dx = np.zeros(shape, dtype=dout.dtype)
    dx[idx, np.arange(shape[1])] = dout
    return dx


# ---------------------------------------------------------------------------
# LSTM

# Gate layout in the fused matrices: [input, forget, output, candidate].


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_step(x, h_prev, c_prev, params, rec_mask=None):
    """One LSTM step. params holds wx (in, 4h), wh (h, 4h), b (4h,).

    rec_mask, when given, is a fixed per-sequence dropout mask applied to the
    hidden state entering the gates (variational recurrent dropout).
    """
    h_in = h_prev if rec_mask is None else h_prev * rec_mask
    z = x @ params["wx"] + h_in @ params["wh"] + params["b"]
    hidden = h_prev.shape[-1]
    i = sigmoid(z[..., :hidden])
    f = sigmoid(z[..., hidden:2 * hidden])
    o = sigmoid(z[..., 2 * hidden:3 * hidden])
    g = np.tanh(z[..., 3 * hidden:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    cache = (x, h_in, c_prev, i, f, o, g, tc, rec_mask)
    return h, c, cache


def lstm_step_backward(dh, dc, cache, params):
    x, h_in, c_prev, i, f, o, g, tc, rec_mask = cache
    do = dh * tc
    dc_total = dc + dh * o * (1.0 - tc * tc)
    di = dc_total * g
    df = dc_total * c_prev
    dg = dc_total * i
    dc_prev = dc_total * f
    dz = np.concatenate([
        di * i * (1.0 - i),
        df * f * (1.0 - f),
        do * o * (1.0 - o),
        dg * (1.0 - g * g),
    ], axis=-1)
    dx = dz @ params["wx"].T
    dh_in = dz @ params["wh"].T
    dh_prev = dh_in if rec_mask is None else dh_in * rec_mask
    grads = {
        "wx": np.outer(x, dz) if x.ndim == 1 else x.T @ dz,
        "wh": np.outer(h_in, dz) if h_in.ndim == 1 else h_in.T @ dz,
        "b": dz,
    }
    return dx, dh_prev, dc_prev, grads


def lstm_forward(xs, params, rec_mask=None):
    """Run an LSTM over xs (seq_len, in_dim) from zero initial state.
    Returns hs (seq_len, hidden) and the caches for backward."""
    seq_len = xs.shape[0]
    hidden = params["wh"].shape[0]
    hs = np.zeros((seq_len, hidden), dtype=xs.dtype)
    h = np.zeros(hidden, dtype=xs.dtype)
    c = np.zeros(hidden, dtype=xs.dtype)
    # the input projection has no time dependency: one matmul for the sequence
    zx = xs @ params["wx"] + params["b"]
    caches = []
    for t in range(seq_len):
        h_in = h if rec_mask is None else h * rec_mask
        z = zx[t] + h_in @ params["wh"]
        i = sigmoid(z[:hidden])
        f = sigmoid(z[hidden:2 * hidden])
        o = sigmoid(z[2 * hidden:3 * hidden])
        g = np.tanh(z[3 * hidden:])
        c_prev = c
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        hs[t] = h
        caches.append((xs[t], h_in, c_prev, i, f, o, g, tc, rec_mask))
    ensure_finite("lstm", hs)
    return hs, caches


def lstm_backward(dhs, caches, params):
    seq_len = len(caches)
    dxs = np.zeros((seq_len, params["wx"].shape[0]), dtype=dhs.dtype)
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dh = np.zeros(params["wh"].shape[0], dtype=dhs.dtype)
    dc = np.zeros_like(dh)
    for t in range(seq_len - 1, -1, -1):
        dx, dh, dc, g = lstm_step_backward(dhs[t] + dh, dc, caches[t], params)
        dxs[t] = dx
        for k in grads:
            grads[k] += g[k]
    return dxs, grads


def bilstm_forward(xs, params_fwd, params_bwd, rec_mask_fwd=None, rec_mask_bwd=None):
    """Bi-directional LSTM: forward state at t concatenated with backward state
    at t, giving (seq_len, 2 * hidden)."""
    hs_f, cache_f = lstm_forward(xs, params_fwd, rec_mask_fwd)
    hs_b_rev, cache_b = lstm_forward(xs[::-1], params_bwd, rec_mask_bwd)
    hs_b = hs_b_rev[::-1]
    return np.concatenate([hs_f, hs_b], axis=1), (cache_f, cache_b, hs_f.shape[1])


def bilstm_backward(dout, cache, params_fwd, params_bwd):
    cache_f, cache_b, hidden = cache
    dxs_f, grads_f = lstm_backward(dout[:, :hidden], cache_f, params_fwd)
    dxs_b_rev, grads_b = lstm_backward(dout[::-1, hidden:], cache_b, params_bwd)
    return dxs_f + dxs_b_rev[::-1], grads_f, grads_b


# ---------------------------------------------------------------------------
# Losses


def softmax(logits):
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    ex = np.exp(shifted)
    return ex / ex.sum(axis=-1, keepdims=True)


def softmax_ce(logits, gold: int):
    """Cross entropy of softmax(logits) against the gold class index.
    Returns (loss, dloss/dlogits)."""
    k = logits.shape[-1]
    if not (0 <= gold < k):
        raise IndexError("gold class %d out of range [0, %d)" % (gold, k))
    probs = softmax(logits)
    loss = -math.log(max(probs[gold], 1e-300))
    dlogits = probs.copy()
    dlogits[gold] -= 1.0
    return loss, dlogits


def _softplus(u):
    return np.logaddexp(0.0, u)


def ranking_loss(scores, gold: int | None, gamma: float = 2.0,
                 margin_pos: float = 2.5, margin_neg: float = 0.5):
    """Pairwise ranking loss over positive-class scores only.

    For a positive gold class y:
        loss = log(1 + exp(gamma * (margin_pos - s_y)))
             + log(1 + exp(gamma * (margin_neg + s_c)))
    with c the highest-scoring class other than y. For the negative class
    (gold is None) only the second term applies, with c the overall argmax,
    which pushes every positive score below zero.
    """
    scores = np.asarray(scores)
    k = scores.shape[0]
    dscores = np.zeros_like(scores)
    if gold is None:
        c = int(np.argmax(scores))
        u = gamma * (margin_neg + scores[c])
        loss = float(_softplus(u))
        dscores[c] = gamma * sigmoid(np.array([u]))[0]
        return loss, dscores
    if not (0 <= gold < k):
        raise IndexError("gold class %d out of range [0, %d)" % (gold, k))
    competitors = scores.copy()
    competitors[gold] = -np.inf
    c = int(np.argmax(competitors))
    u_pos = gamma * (margin_pos - scores[gold])
    u_neg = gamma * (margin_neg + scores[c])
    loss = float(_softplus(u_pos) + _softplus(u_neg))
    dscores[gold] = -gamma * sigmoid(np.array([u_pos]))[0]
    dscores[c] += gamma * sigmoid(np.array([u_neg]))[0]
    return loss, dscores


# ---------------------------------------------------------------------------
# Dropout


def dropout_forward(x, rate: float, rng: np.random.Generator | None, train: bool):
    """Inverted dropout: in train mode zero with probability `rate` and scale
    survivors by 1/(1-rate); eval mode is the identity. Returns (out, mask)
    where mask is None whenever the op was the identity."""
    if not (0.0 <= rate < 1.0):
        raise ValueError("dropout rate must be in [0, 1), got %r" % rate)
    if not train or rate == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


def make_dropout_mask(rng: np.random.Generator, shape, rate: float):
    """Standalone scaled keep-mask, used for per-sequence recurrent dropout."""
    if rate == 0.0:
        return None
    return (rng.random(shape) >= rate) / (1.0 - rate)


# ---------------------------------------------------------------------------
# Optimization


class Adam:
    """Bias-corrected Adam. Updates parameters in place so that embedding
    tables aliased by the models stay live."""

    def __init__(self, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
                 epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
             skip: frozenset | set = frozenset()):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k in params:
            if k in skip:
                continue
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            self.m[k] *= self.beta1
            self.m[k] += (1.0 - self.beta1) * g
            self.v[k] *= self.beta2
            self.v[k] += (1.0 - self.beta2) * (g * g)
            mhat = self.m[k] / bc1
            vhat = self.v[k] / bc2
            params[k] -= self.lr * mhat / (np.sqrt(vhat) + self.epsilon)
            ensure_finite("adam update of %s" % k, params[k])


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is at most
    max_norm. Returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0.0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


# ---------------------------------------------------------------------------
# Parameter initialization


def glorot_uniform(rng: np.random.Generator, shape, dtype=np.float64):
    """Uniform in +-sqrt(6 / (fan_in + fan_out)). For 3-D convolution filters
    (k, in, out) the fans are k*in and k*out."""
    if len(shape) == 2:
        fan_in, fan_out = shape
    elif len(shape) == 3:
        fan_in = shape[0] * shape[1]
        fan_out = shape[0] * shape[2]
    else:
        raise ValueError("unsupported shape %r" % (shape,))
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def embedding_init(rng: np.random.Generator, n_rows: int, dim: int, dtype=np.float64):
    return rng.uniform(-0.05, 0.05, size=(n_rows, dim)).astype(dtype)


def lstm_param_init(rng: np.random.Generator, in_dim: int, hidden: int, dtype=np.float64):
    """Glorot weights, zero biases except the forget gate bias at 1.0."""
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden:2 * hidden] = 1.0
    return {
        "wx": glorot_uniform(rng, (in_dim, 4 * hidden), dtype),
        "wh": glorot_uniform(rng, (hidden, 4 * hidden), dtype),
        "b": b,
    }


# ---------------------------------------------------------------------------
# Embedding tables


class EmbeddingTable:
    """Symbol -> row lookup over a trainable matrix. Unknown symbols map to the
    UNK row when one was declared at construction."""

    def __init__(self, symbols, dim: int, rng: np.random.Generator,
                 unk: str | None = None, trainable: bool = True, dtype=np.float64):
        ordered = list(dict.fromkeys(symbols))
        if unk is not None and unk not in ordered:
            ordered.insert(0, unk)
        self.symbols = tuple(ordered)
        self.vocab = {s: i for i, s in enumerate(self.symbols)}
        self.unk = unk
        self.trainable = trainable
        self.matrix = embedding_init(rng, len(self.symbols), dim, dtype)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        idx = self.vocab.get(symbol)
        if idx is None:
            if self.unk is None:
                raise KeyError("unknown symbol %r in embedding table without UNK" % symbol)
            idx = self.vocab[self.unk]
        return idx

    def indices(self, symbols) -> np.ndarray:
        return np.array([self.index(s) for s in symbols], dtype=np.int64)

    def rows(self, indices: np.ndarray) -> np.ndarray:
        return self.matrix[indices]

    def load_pretrained(self, vectors: dict[str, np.ndarray]) -> int:
        """Overwrite rows for symbols present in `vectors`; returns the count."""
        loaded = 0
        for sym, idx in self.vocab.items():
            vec = vectors.get(sym)
            if vec is None:
                continue
            if vec.shape[0] != self.dim:
                raise ValueError("pretrained vector for %r has dim %d, table has %d"
                                 % (sym, vec.shape[0], self.dim))
            self.matrix[idx] = vec
            loaded += 1
        return loaded


def embedding_backward(dout: np.ndarray, indices: np.ndarray, table_shape) -> np.ndarray:
    """Scatter-add sequence gradients back into a dense table gradient."""
    dtable = np.zeros(table_shape, dtype=dout.dtype)
    np.add.at(dtable, indices, dout)
    return dtable


def load_word_vectors(path) -> tuple[dict[str, np.ndarray], int]:
    """Read a pre-trained embedding text file, one `word v1 ... vD` per line.
    Returns (word -> vector, dim)."""
    vectors: dict[str, np.ndarray] = {}
    dim = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise ValueError("line %d: expected %d values, got %d"
                                 % (lineno, dim, len(values)))
            vectors[word] = np.array([float(v) for v in values], dtype=np.float64)
    if dim is None:
        raise ValueError("embedding file %s is empty" % path)
    return vectors, dim
