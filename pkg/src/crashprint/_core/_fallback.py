"""Pure-Python/numpy versions of the compiled kernels (same signatures and results)."""

import math

import numpy as np


def binary_search_perplexity(d2, perplexity, tol=1e-6, max_iter=200):
    n = d2.shape[0]
    target = math.log(perplexity)
    P = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        row = np.delete(d2[i], i)
        row = row - row.min()
        beta, lo, hi = 1.0, -math.inf, math.inf
        for _ in range(max_iter):
            p = np.exp(-row * beta)
            sum_p = p.sum()
            h = math.log(sum_p) + beta * float(np.dot(row, p)) / sum_p
            if abs(h - target) <= tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == math.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == -math.inf else (beta + lo) / 2.0
        P[i, np.arange(n) != i] = p / sum_p
        betas[i] = beta
    return P, betas


def tsne_gradient(P, Y):
    sq = np.sum(Y * Y, axis=1)
    d2 = np.maximum(sq[:, None] + sq[None, :] - 2.0 * Y @ Y.T, 0.0)
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    q = num / num.sum()
    mask = P > 0
    kl = float(np.sum(P[mask] * np.log(P[mask] / np.maximum(q[mask], 1e-12))))
    w = 4.0 * (P - q) * num
    grad = w.sum(axis=1)[:, None] * Y - w @ Y
    return grad, kl


def cluster_distance_sums(X, labels, k):
    # explicit differences rather than the |a|^2 + |b|^2 - 2ab expansion,
    # which loses digits for nearby points
    n, dim = X.shape
    out = np.zeros((n, k))
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    block = max(1, (1 << 22) // max(n * dim, 1))
    for start in range(0, n, block):
        diff = X[start:start + block, None, :] - X[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        out[start:start + block] = d @ onehot
    return out
