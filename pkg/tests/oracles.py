"""Independent reference implementations the tests compare against.

Everything here is deliberately naive: plain loops, brute force, and
textbook formulas. Nothing in this file imports from repcone, so a bug
in the package cannot hide behind a shared helper. Frozen; change only
with a reason written in the commit.
"""

import math

import numpy as np
from scipy import stats


def bruteforce_axis_value(unit, coverage, restarts=100, iters=600, seed=0):
    """Best achievable min-cosine over a coverage subset, by restarts.

    Projected subgradient ascent on the k-th order statistic of the
    cosines (k = ceil(coverage * n)) from `restarts` random unit
    initializations, step 0.5/sqrt(t), tracking the best value seen
    anywhere along every trajectory.
    """
    n, d = unit.shape
    k = math.ceil(coverage * n)
    rng = np.random.Generator(np.random.PCG64(seed))
    best = -2.0
    for _ in range(restarts):
        c = rng.standard_normal(d)
        c /= np.linalg.norm(c)
        for t in range(1, iters + 1):
            cos = unit @ c
            j = np.argpartition(cos, n - k)[n - k]
            c = c + (0.5 / math.sqrt(t)) * unit[j]
            c /= np.linalg.norm(c)
            v = float(np.partition(unit @ c, n - k)[n - k])
            if v > best:
                best = v
    return best


def nearest_neighbors_scan(mat, n):
    """O(rows^2) exact neighbor lists; ties by ascending row index."""
    mat = np.asarray(mat, dtype=np.float64)
    size = mat.shape[0]
    k = min(n, size - 1)
    out = np.empty((size, k), dtype=np.int64)
    for i in range(size):
        cand = []
        for j in range(size):
            if j == i:
                continue
            diff = mat[i] - mat[j]
            cand.append((float(diff @ diff), j))
        cand.sort()
        out[i] = [j for _, j in cand[:k]]
    return out


def pearson_reference(x, y):
    return float(stats.pearsonr(np.asarray(x, float), np.asarray(y, float))[0])


def order_retention_reference(before, after, axis, n):
    """Straight-line evaluation of the neighborhood-order statistic."""
    before = np.asarray(before, float)
    after = np.asarray(after, float)
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    ids = nearest_neighbors_scan(before, n)
    x = (after @ axis) / np.linalg.norm(after, axis=1)
    y = np.array([x[row].sum() for row in ids])
    return pearson_reference(x, y)


def central_differences(loss_fn, params, h=1e-5):
    """FD gradients of loss_fn(params) for a dict of float arrays."""
    grads = {}
    for name, arr in params.items():
        g = np.zeros_like(arr, dtype=np.float64)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn(params)
            flat[i] = orig - h
            down = loss_fn(params)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads[name] = g
    return grads


def best_span_pair(start_probs, end_probs, max_len):
    """Enumerate every legal (s, e) pair; ties to smallest s then e."""
    ln = len(start_probs)
    best = None
    # visiting s then e in ascending order makes strict > the tie rule
    for s in range(ln):
        for e in range(s, min(ln, s + max_len)):
            score = float(start_probs[s]) * float(end_probs[e])
            if best is None or score > best[0]:
                best = (score, s, e)
    return best[1], best[2]


def adam_scalar_path(grads, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, theta0=0.0):
    """Textbook bias-corrected recurrence on one scalar parameter."""
    m = v = 0.0
    theta = theta0
    path = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mhat = m / (1 - beta1**t)
        vhat = v / (1 - beta2**t)
        theta = theta - lr * mhat / (math.sqrt(vhat) + eps)
        path.append(theta)
    return path


def cross_cosine_support(a, b):
    """Exact min/max cosine over all cross pairs of two row sets."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    an = a / np.linalg.norm(a, axis=1, keepdims=True)
    bn = b / np.linalg.norm(b, axis=1, keepdims=True)
    cos = an @ bn.T
    return float(cos.min()), float(cos.max())
