# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for t-SNE affinities/gradients and pairwise silhouette sums."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, sqrt, fabs, INFINITY

cnp.import_array()


def binary_search_perplexity(double[:, ::1] d2, double perplexity, double tol=1e-6,
                             int max_iter=200):
    cdef Py_ssize_t n = d2.shape[0]
    cdef Py_ssize_t i, j, it
    cdef double target = log(perplexity)
    cdef double beta, lo, hi, sum_p, h, pij, dmin
    P_arr = np.zeros((n, n), dtype=np.float64)
    beta_arr = np.ones(n, dtype=np.float64)
    cdef double[:, ::1] P = P_arr
    cdef double[::1] betas = beta_arr
    for i in range(n):
        beta = 1.0
        lo = -INFINITY
        hi = INFINITY
        dmin = INFINITY
        for j in range(n):
            if j != i and d2[i, j] < dmin:
                dmin = d2[i, j]
        for it in range(max_iter):
            sum_p = 0.0
            h = 0.0
            for j in range(n):
                if j == i:
                    P[i, j] = 0.0
                    continue
                pij = exp(-(d2[i, j] - dmin) * beta)
                P[i, j] = pij
                sum_p += pij
                h += (d2[i, j] - dmin) * pij
            h = log(sum_p) + beta * h / sum_p
            if fabs(h - target) <= tol:
                break
            if h > target:
                lo = beta
                beta = beta * 2.0 if hi == INFINITY else (beta + hi) / 2.0
            else:
                hi = beta
                beta = beta / 2.0 if lo == -INFINITY else (beta + lo) / 2.0
        for j in range(n):
            P[i, j] /= sum_p
        betas[i] = beta
    return P_arr, beta_arr


def tsne_gradient(double[:, ::1] P, double[:, ::1] Y):
    cdef Py_ssize_t n = Y.shape[0]
    cdef Py_ssize_t dim = Y.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double s, d, w, z_sum = 0.0, kl = 0.0, q, pij
    num_arr = np.zeros((n, n), dtype=np.float64)
    grad_arr = np.zeros((n, dim), dtype=np.float64)
    cdef double[:, ::1] num = num_arr
    cdef double[:, ::1] grad = grad_arr
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for k in range(dim):
                d = Y[i, k] - Y[j, k]
                s += d * d
            w = 1.0 / (1.0 + s)
            num[i, j] = w
            num[j, i] = w
            z_sum += 2.0 * w
    for i in range(n):
        for j in range(n):
            if j == i:
                continue
            w = num[i, j]
            q = w / z_sum
            pij = P[i, j]
            if pij > 0.0:
                kl += pij * log(pij / (q if q > 1e-12 else 1e-12))
            s = 4.0 * (pij - q) * w
            for k in range(dim):
                grad[i, k] += s * (Y[i, k] - Y[j, k])
    return grad_arr, kl


def cluster_distance_sums(double[:, ::1] X, long[::1] labels, int k):
    """sums[i, c] = sum of Euclidean distances from point i to points with label c."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t dim = X.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double s, d
    out_arr = np.zeros((n, k), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for t in range(dim):
                d = X[i, t] - X[j, t]
                s += d * d
            s = sqrt(s)
            out[i, labels[j]] += s
            out[j, labels[i]] += s
    return out_arr
