"""Deep Embedded Clustering refinement of an encoder and its centroids.

Soft assignments use a Student-t kernel (alpha = 1); the target distribution
squares and renormalises them by cluster mass. Encoder and centroids both
descend KL(P || Q) with P held fixed between refreshes.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, TrainingDivergedError
from .numerics import Adam, Rng

log = logging.getLogger(__name__)

ALPHA = 1.0
LOG_FLOOR = 1e-12
DEFAULT_K = 20
DEFAULT_UPDATE_INTERVAL = 140


def _kernel(z, centroids, alpha=ALPHA):
    z = np.asarray(z, dtype=np.float64)
    c = np.asarray(centroids, dtype=np.float64)
    diff = z[:, None, :] - c[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    return diff, (1.0 + d2 / alpha) ** (-(alpha + 1.0) / 2.0)


def soft_assign(z, centroids, alpha=ALPHA):
    """q[i, j] proportional to (1 + |z_i - mu_j|^2 / alpha)^(-(alpha+1)/2)."""
    centroids = np.asarray(centroids)
    if centroids.ndim != 2 or centroids.shape[0] < 2:
        raise InvalidInputError("soft assignment needs at least 2 centroids")
    z = np.atleast_2d(z)
    if z.shape[1] != centroids.shape[1]:
        raise InvalidInputError("embedding and centroid dimensions differ")
    _, num = _kernel(z, centroids, alpha)
    return num / num.sum(axis=1, keepdims=True)


def target_distribution(q):
    q = np.asarray(q, dtype=np.float64)
    w = q ** 2 / q.sum(axis=0)
    return w / w.sum(axis=1, keepdims=True)


def dec_loss(p, q):
    """sum_ij p log(p / q), with 0 log 0 = 0 and q floored at 1e-12."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise InvalidInputError("p and q must have the same shape")
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(np.maximum(q[mask], LOG_FLOOR)))))


def dec_loss_and_grads(z, centroids, p, alpha=ALPHA):
    """KL(P||Q) with gradients w.r.t. embeddings and centroids (P constant)."""
    diff, num = _kernel(z, centroids, alpha)
    q = num / num.sum(axis=1, keepdims=True)
    loss = dec_loss(p, q)
    # (1 + d2/alpha)^-1 factor of the Student-t derivative
    inv = num ** (2.0 / (alpha + 1.0))
    w = ((alpha + 1.0) / alpha) * inv * (p - q)
    dz = np.einsum("ij,ijk->ik", w, diff)
    dmu = -np.einsum("ij,ijk->jk", w, diff)
    return loss, dz, dmu


@dataclass
class DecConfig:
    iters: int = 2000
    update_interval: int = DEFAULT_UPDATE_INTERVAL
    lr: float = 1e-4
    batch: int = 64
    seed: int = 0
    collapse_eps: float = 1e-6


@dataclass
class DecResult:
    model: object
    centroids: np.ndarray
    loss_curve: list = field(default_factory=list)
    refresh_losses: list = field(default_factory=list)


def _full_p(model, x, centroids):
    z = model.encode(x)[0].astype(np.float64)
    q = soft_assign(z, centroids)
    p = target_distribution(q)
    return p, dec_loss(p, q)


def dec_train(model, x, initial_centroids, config):
    """Jointly refine `model`'s encoder (in place) and the centroids.

    `x` is the stacked training matrix. Only encoder parameters move: for a
    VAE these are the trunk and the mean head. The decoder is left as is.
    """
    x = np.asarray(x, dtype=model.params()[0].dtype)
    centroids = np.array(initial_centroids, dtype=np.float64)
    if centroids.shape[0] < 2:
        raise InvalidInputError("DEC needs at least 2 initial centroids")
    rng = Rng(config.seed).spawn(7)
    enc_params = model.encoder_params()
    opt_enc = Adam(config.lr)
    opt_mu = Adam(config.lr)
    n = x.shape[0]
    order = rng.permutation(n)
    cursor = 0
    p = None
    curve, refresh = [], []
    for it in range(config.iters):
        if it % config.update_interval == 0:
            p, full = _full_p(model, x, centroids)
            refresh.append(full)
            log.debug("DEC iter %d KL %.6f", it, full)
        if cursor >= n:
            order = rng.permutation(n)
            cursor = 0
        idx = order[cursor:cursor + config.batch]
        cursor += config.batch
        z, cache = model.encode(x[idx])
        loss, dz, dmu = dec_loss_and_grads(z, centroids, p[idx])
        if not np.isfinite(loss):
            raise TrainingDivergedError("non-finite DEC loss", it)
        scale = 1.0 / len(idx)
        grads = model.encode_backward(cache, (dz * scale).astype(z.dtype))
        opt_enc.step(enc_params, grads, it)
        model.touch()
        opt_mu.step([centroids], [dmu * scale], it)
        curve.append(loss * scale)
    _warn_collapse(centroids, config.collapse_eps)
    return DecResult(model, centroids, curve, refresh)


def _warn_collapse(centroids, eps):
    d = np.sqrt(((centroids[:, None, :] - centroids[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(d, np.inf)
    if d.min() < eps:
        warnings.warn(f"DEC centroids collapsed (min separation {d.min():.3g})", RuntimeWarning)
