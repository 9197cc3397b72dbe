"""Tape-based reverse-mode automatic differentiation over dense float64 arrays.

Every primitive op records a backward closure on the tape that owns its
operands. A single call to Tape.backward replays the closures in reverse
construction order (a valid reverse topological order for eagerly built
graphs) and accumulates gradients on every node, including leaves.
"""

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, UsageError

__all__ = [
    "Tape",
    "Node",
    "GnlmBlockParams",
    "conv1d",
    "relu",
    "maxpool1d",
    "gnlm_denoise",
    "global_avg_pool",
    "dense",
    "softmax_cross_entropy",
    "kl_divergence",
    "add",
    "scale",
    "softmax",
    "log_softmax",
]


class Node:
    """One value in the computation graph. grad is filled by Tape.backward."""

    __slots__ = ("value", "grad", "_backward", "_tape")

    def __init__(self, value, tape, backward=None):
        self.value = value
        self.grad = None
        self._backward = backward
        self._tape = tape


class Tape:
    """Ordered record of one forward pass; consumable by one backward pass."""

    def __init__(self):
        self._nodes = []
        self._consumed = False

    def leaf(self, value):
        arr = np.asarray(value, dtype=np.float64)
        return Node(arr, self)

    def _record(self, value, backward):
        node = Node(value, self, backward)
        self._nodes.append(node)
        return node

    def backward(self, output, seed=1.0):
        """Seed the output gradient and propagate to all nodes and leaves."""
        if self._consumed:
            raise UsageError("tape already consumed by a backward pass")
        self._consumed = True
        if output._tape is not self:
            raise UsageError("output node does not belong to this tape")
        output.grad = np.full_like(output.value, seed)
        for node in reversed(self._nodes):
            if node.grad is not None and node._backward is not None:
                node._backward(node.grad)


def _accum(node, g):
    if node.grad is None:
        node.grad = g.copy() if isinstance(g, np.ndarray) else np.asarray(g)
    else:
        node.grad = node.grad + g


def _same_tape(*nodes):
    tape = nodes[0]._tape
    for n in nodes[1:]:
        if n._tape is not tape:
            raise UsageError("operands recorded on different tapes")
    return tape


@dataclass
class GnlmBlockParams:
    """Embedding weights of one Gaussian non-local-means denoising block.

    Both embeddings map the d input channels to 64 dimensions via a
    bias-free 1x1 convolution.
    """

    theta_weights: np.ndarray  # (d, 64)
    phi_weights: np.ndarray  # (d, 64)

    EMBED_DIM = 64

    @property
    def d(self):
        return self.theta_weights.shape[0]

    def __post_init__(self):
        tw, pw = self.theta_weights, self.phi_weights
        if tw.ndim != 2 or pw.ndim != 2 or tw.shape != pw.shape:
            raise ConfigError("theta/phi weights must share shape (d, 64)")
        if tw.shape[1] != self.EMBED_DIM:
            raise ConfigError(f"embeddings must have {self.EMBED_DIM} dimensions")


def conv1d(x, kernels, bias):
    """Same-length cross-correlation: (C_in, T) -> (C_out, T), odd K, zero pad."""
    tape = _same_tape(x, kernels, bias)
    xv, wv, bv = x.value, kernels.value, bias.value
    if xv.ndim != 2 or wv.ndim != 3 or bv.ndim != 1:
        raise ConfigError("conv1d expects input (C_in,T), kernels (C_out,C_in,K), bias (C_out,)")
    c_out, c_in, k = wv.shape
    if k % 2 == 0:
        raise ConfigError("conv1d kernel size must be odd")
    if xv.shape[0] != c_in or bv.shape[0] != c_out:
        raise ConfigError(
            f"conv1d shape mismatch: input {xv.shape}, kernels {wv.shape}, bias {bv.shape}"
        )
    t = xv.shape[1]
    pad = k // 2
    xp = np.zeros((c_in, t + k - 1))
    xp[:, pad:pad + t] = xv
    patches = sliding_window_view(xp, k, axis=1)  # (C_in, T, K)
    y = np.tensordot(wv, patches, axes=([1, 2], [0, 2])) + bv[:, None]

    def backward(dy):
        _accum(bias, dy.sum(axis=1))
        _accum(kernels, np.tensordot(dy, patches, axes=([1], [1])))
        dxp = np.zeros_like(xp)
        for kk in range(k):
            dxp[:, kk:kk + t] += wv[:, :, kk].T @ dy
        _accum(x, dxp[:, pad:pad + t])

    return tape._record(y, backward)


def relu(x):
    mask = x.value > 0
    y = np.where(mask, x.value, 0.0)

    def backward(dy):
        _accum(x, dy * mask)

    return x._tape._record(y, backward)


def maxpool1d(x, window):
    """Non-overlapping window max; a partial final window pools the remainder.

    Backward routes the gradient to the first maximal element of each window.
    """
    if window < 1:
        raise ConfigError("maxpool window must be >= 1")
    xv = x.value
    if xv.ndim != 2:
        raise ConfigError("maxpool1d expects input (C, T)")
    c, t = xv.shape
    nfull = t // window
    rem = t % window
    parts = []
    argmaxes = []  # absolute time indices per output column, shape (C,)
    if nfull:
        main = xv[:, :nfull * window].reshape(c, nfull, window)
        idx = main.argmax(axis=2)  # first max on ties
        parts.append(main.max(axis=2))
        argmaxes.append(idx + np.arange(nfull)[None, :] * window)
    if rem:
        tail = xv[:, nfull * window:]
        parts.append(tail.max(axis=1, keepdims=True))
        argmaxes.append(tail.argmax(axis=1)[:, None] + nfull * window)
    y = np.concatenate(parts, axis=1)
    pos = np.concatenate(argmaxes, axis=1)  # (C, T_out)

    def backward(dy):
        dx = np.zeros_like(xv)
        rows = np.arange(c)[:, None]
        np.add.at(dx, (rows, pos), dy)
        _accum(x, dx)

    return x._tape._record(y, backward)


def gnlm_denoise(x, theta, phi):
    """Gaussian non-local means over time positions of a (C, T) feature map.

    Output column i is the softmax-weighted average of all input columns j
    with logits theta(x_i)^T phi(x_j) / sqrt(C); the row-max logit is
    subtracted before exponentiation (value preserving) to avoid overflow.
    """
    tape = _same_tape(x, theta, phi)
    xv, tw, pw = x.value, theta.value, phi.value
    if xv.ndim != 2 or tw.shape[0] != xv.shape[0] or pw.shape != tw.shape:
        raise ConfigError(
            f"gnlm shape mismatch: input {xv.shape}, theta {tw.shape}, phi {pw.shape}"
        )
    d = xv.shape[0]
    emb_t = tw.T @ xv  # (64, T)
    emb_p = pw.T @ xv  # (64, T)
    logits = (emb_t.T @ emb_p) / np.sqrt(d)  # (T, T), row i = position i
    logits_shift = logits - logits.max(axis=1, keepdims=True)
    expw = np.exp(logits_shift)
    attn = expw / expw.sum(axis=1, keepdims=True)  # (T, T), rows sum to 1
    y = xv @ attn.T  # y[:, i] = sum_j attn[i, j] x[:, j]

    def backward(dy):
        dattn = dy.T @ xv  # (T, T): dattn[i, j] = sum_c dy[c, i] x[c, j]
        dx = dy @ attn
        # softmax rows backward
        dlogits = attn * (dattn - (dattn * attn).sum(axis=1, keepdims=True))
        dlogits = dlogits / np.sqrt(d)
        demb_t = emb_p @ dlogits.T  # (64, T)
        demb_p = emb_t @ dlogits  # (64, T)
        _accum(theta, xv @ demb_t.T)
        _accum(phi, xv @ demb_p.T)
        dx = dx + tw @ demb_t + pw @ demb_p
        _accum(x, dx)

    return tape._record(y, backward)


def global_avg_pool(x):
    """(C, T) -> (C,) mean over time."""
    xv = x.value
    t = xv.shape[1]
    y = xv.mean(axis=1)

    def backward(dy):
        _accum(x, np.repeat(dy[:, None], t, axis=1) / t)

    return x._tape._record(y, backward)


def dense(x, weights, bias):
    """Affine map: (n,) -> (m,) with weights (m, n)."""
    tape = _same_tape(x, weights, bias)
    xv, wv, bv = x.value, weights.value, bias.value
    if wv.ndim != 2 or xv.shape != (wv.shape[1],) or bv.shape != (wv.shape[0],):
        raise ConfigError(
            f"dense shape mismatch: input {xv.shape}, weights {wv.shape}, bias {bv.shape}"
        )
    y = wv @ xv + bv

    def backward(dy):
        _accum(bias, dy)
        _accum(weights, np.outer(dy, xv))
        _accum(x, wv.T @ dy)

    return tape._record(y, backward)


def _log_softmax_value(v):
    shifted = v - v.max()
    return shifted - np.log(np.exp(shifted).sum())


def softmax(v):
    """Plain ndarray softmax (no tape)."""
    return np.exp(_log_softmax_value(np.asarray(v, dtype=np.float64)))


def log_softmax(v):
    """Plain ndarray log-softmax (no tape)."""
    return _log_softmax_value(np.asarray(v, dtype=np.float64))


def softmax_cross_entropy(logits, label):
    """-log softmax(logits)[label]; gradient is softmax - onehot(label)."""
    lv = logits.value
    n = lv.shape[0]
    if not (0 <= label < n):
        raise UsageError(f"label {label} out of range for {n} classes")
    logp = _log_softmax_value(lv)
    loss = -logp[label]
    probs = np.exp(logp)

    def backward(dy):
        g = probs.copy()
        g[label] -= 1.0
        _accum(logits, dy * g)

    return logits._tape._record(np.float64(loss), backward)


def kl_divergence(p_logits, q_logits):
    """KL(softmax(p) || softmax(q)), stable via log-softmax; grads to both."""
    tape = _same_tape(p_logits, q_logits)
    pv, qv = p_logits.value, q_logits.value
    if pv.shape != qv.shape:
        raise ConfigError("kl_divergence expects equal-length logit vectors")
    lp = _log_softmax_value(pv)
    lq = _log_softmax_value(qv)
    p = np.exp(lp)
    q = np.exp(lq)
    kl = float(np.dot(p, lp - lq))

    def backward(dy):
        _accum(p_logits, dy * (p * ((lp - lq) - kl)))
        _accum(q_logits, dy * (q - p))

    return tape._record(np.float64(kl), backward)


def add(a, b):
    tape = _same_tape(a, b)
    y = a.value + b.value

    def backward(dy):
        _accum(a, dy)
        _accum(b, dy)

    return tape._record(y, backward)


def scale(a, c):
    """Multiply a node by a plain scalar constant."""
    y = a.value * c

    def backward(dy):
        _accum(a, dy * c)

    return a._tape._record(y, backward)
