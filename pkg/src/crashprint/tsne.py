"""Exact t-SNE for 2-D cluster plots."""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import InvalidInputError
from .numerics import Rng

PERPLEXITY = 30.0
ITERATIONS = 1000
EARLY_EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
LEARNING_RATE = 200.0
MIN_GAIN = 0.01


@dataclass
class Projection:
    coords: np.ndarray
    labels: np.ndarray = None
    tags: list = None
    session_ids: list = None
    kl_history: list = field(default_factory=list, repr=False)
    betas: np.ndarray = field(default=None, repr=False)


def pairwise_sq_dists(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty((len(x), len(x)))
    for i in range(len(x)):
        diff = x - x[i]
        out[i] = np.einsum("ij,ij->i", diff, diff)
    return out


def conditional_affinities(x, perplexity, tol=1e-6):
    """Row-normalised Gaussian affinities with per-point bandwidth matched to `perplexity`."""
    d2 = np.ascontiguousarray(pairwise_sq_dists(x))
    return _core.binary_search_perplexity(d2, float(perplexity), tol)


def row_perplexity(p_cond):
    p = np.asarray(p_cond)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log(p), 0.0).sum(axis=1)
    return np.exp(h)


def tsne(points, perplexity=PERPLEXITY, iters=ITERATIONS, seed=0,
         early_exaggeration=EARLY_EXAGGERATION, exaggeration_iters=EXAGGERATION_ITERS,
         learning_rate=LEARNING_RATE):
    x = np.asarray(points, dtype=np.float64)
    n = x.shape[0]
    if perplexity <= 0 or n < 3 * perplexity:
        raise InvalidInputError(f"perplexity {perplexity} too large for {n} points (need n >= 3*perplexity)")
    p_cond, betas = conditional_affinities(x, perplexity)
    p = (p_cond + p_cond.T) / (2.0 * n)
    p = np.ascontiguousarray(np.maximum(p, 1e-12))
    np.fill_diagonal(p, 0.0)

    rng = Rng(seed)
    y = 1e-4 * rng.normal((n, 2))
    velocity = np.zeros_like(y)
    gains = np.ones_like(y)
    history = []
    for it in range(iters):
        exaggerate = it < exaggeration_iters
        target = p * early_exaggeration if exaggerate else p
        grad, kl = _core.tsne_gradient(np.ascontiguousarray(target), np.ascontiguousarray(y))
        if not exaggerate:
            history.append(kl)
        momentum = 0.5 if it < exaggeration_iters else 0.8
        same = np.sign(grad) == np.sign(velocity)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, MIN_GAIN, out=gains)
        velocity = momentum * velocity - learning_rate * gains * grad
        y = y + velocity
        y -= y.mean(axis=0)
    return Projection(y, kl_history=history, betas=betas)


def write_projection(path_or_fh, projection):
    n = len(projection.coords)
    ids = projection.session_ids or [str(i) for i in range(n)]
    labels = projection.labels if projection.labels is not None else [""] * n
    tags = projection.tags or [""] * n
    own = not hasattr(path_or_fh, "write")
    fh = open(path_or_fh, "w", newline="") if own else path_or_fh
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["session_id", "x", "y", "cluster_label", "tag"])
        for sid, (cx, cy), lab, tag in zip(ids, projection.coords, labels, tags):
            w.writerow([sid, repr(float(cx)), repr(float(cy)), lab, tag])
    finally:
        if own:
            fh.close()
