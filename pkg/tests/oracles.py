"""Independent oracles for the test suite.

Everything here is a deliberately naive implementation (nested loops,
enumeration, finite differences) kept free of any code under test.
"""

import itertools

import numpy as np


def conv1d_loops(x, kernels, bias):
    """Direct nested-loop same-length cross-correlation with zero padding."""
    c_out, c_in, k = kernels.shape
    t = x.shape[1]
    pad = k // 2
    y = np.zeros((c_out, t))
    for o in range(c_out):
        for pos in range(t):
            acc = bias[o]
            for i in range(c_in):
                for kk in range(k):
                    src = pos + kk - pad
                    if 0 <= src < t:
                        acc += kernels[o, i, kk] * x[i, src]
            y[o, pos] = acc
    return y


def maxpool1d_loops(x, window):
    c, t = x.shape
    n_out = int(np.ceil(t / window))
    y = np.zeros((c, n_out))
    for ch in range(c):
        for j in range(n_out):
            y[ch, j] = x[ch, j * window:(j + 1) * window].max()
    return y


def gnlm_loops(x, theta_w, phi_w):
    """Double loop over time positions computing f and the normalized sum."""
    d, t = x.shape
    y = np.zeros_like(x)
    emb_t = [theta_w.T @ x[:, i] for i in range(t)]
    emb_p = [phi_w.T @ x[:, j] for j in range(t)]
    for i in range(t):
        logits = np.array([emb_t[i] @ emb_p[j] / np.sqrt(d) for j in range(t)])
        logits -= logits.max()
        w = np.exp(logits)
        w /= w.sum()
        for j in range(t):
            y[:, i] += w[j] * x[:, j]
    return y


def dense_loops(x, weights, bias):
    m, n = weights.shape
    y = np.zeros(m)
    for i in range(m):
        acc = bias[i]
        for j in range(n):
            acc += weights[i, j] * x[j]
        y[i] = acc
    return y


def finite_diff(f, x, step=1e-4):
    """Central finite differences of a scalar function at x (any shape)."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2 * step)
    return grad


def rel_error(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return np.abs(a - b).max() / denom


def corner_worst_loss(loss_fn, x, epsilon):
    """Exhaustive max of loss_fn over the 2^d corners of the epsilon box."""
    x = np.asarray(x, dtype=np.float64).ravel()
    best = -np.inf
    for signs in itertools.product((-1.0, 1.0), repeat=x.size):
        cand = x + epsilon * np.asarray(signs)
        best = max(best, loss_fn(cand))
    return best


def simba_exhaustive(prob_fn, x, y, epsilon):
    """Enumerate all 3^d per-coordinate {-eps, 0, +eps} assignments and
    return the perturbed input minimizing the class-y probability."""
    x = np.asarray(x, dtype=np.float64).ravel()
    best = None
    best_p = np.inf
    for moves in itertools.product((-epsilon, 0.0, epsilon), repeat=x.size):
        cand = x + np.asarray(moves)
        p = prob_fn(cand)[y]
        if p < best_p:
            best_p = p
            best = cand
    return best
