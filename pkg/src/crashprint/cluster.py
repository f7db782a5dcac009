"""K-Means (k-means++ seeding, Lloyd iterations), cluster validity indices, elbow selection."""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import InvalidInputError, UndefinedMetricError
from .numerics import Rng

log = logging.getLogger(__name__)

DEGENERATE = 1e300
DEFAULT_RESTARTS = 10
MAX_LLOYD_ITERS = 300


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    n_iter: int
    history: list = field(default_factory=list)


def _sq_dists(x, c):
    d2 = (x * x).sum(1)[:, None] + (c * c).sum(1)[None, :] - 2.0 * x @ c.T
    return np.maximum(d2, 0.0)


def _exact_inertia(x, c, labels):
    diff = x - c[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def kmeans_plusplus(x, k, rng):
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    closest = _sq_dists(x, centers[:1])[:, 0]
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.uniform(0, total, None)))
            idx = min(idx, n - 1)
        centers[j] = x[idx]
        closest = np.minimum(closest, _sq_dists(x, centers[j:j + 1])[:, 0])
    return centers


def lloyd(x, centers, max_iter=MAX_LLOYD_ITERS):
    centers = centers.copy()
    k = centers.shape[0]
    labels = None
    history = []
    for it in range(max_iter):
        d2 = _sq_dists(x, centers)
        new = d2.argmin(axis=1)
        history.append(_exact_inertia(x, centers, new))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j]:
                centers[j] = x[labels == j].mean(axis=0)
        for j in np.flatnonzero(counts == 0):
            # re-seed an empty cluster at the point worst served by its centroid
            far = int(np.argmax(((x - centers[labels]) ** 2).sum(1)))
            centers[j] = x[far]
            labels[far] = j
    labels = _sq_dists(x, centers).argmin(axis=1)
    return labels, centers, _exact_inertia(x, centers, labels), it + 1, history


def kmeans_fit(points, k, seed=0, restarts=DEFAULT_RESTARTS, max_iter=MAX_LLOYD_ITERS):
    """Best-of-`restarts` Lloyd's algorithm from k-means++ seeds."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidInputError("points must be an (n, d) matrix")
    if k < 2 or x.shape[0] < k:
        raise InvalidInputError(f"need n >= k >= 2 (n={x.shape[0]}, k={k})")
    rng = Rng(seed)
    best = None
    for _ in range(max(restarts, 1)):
        run = lloyd(x, kmeans_plusplus(x, k, rng), max_iter)
        if best is None or run[2] < best[2]:
            best = run
    labels, centers, inertia, n_iter, history = best
    return KMeansResult(labels, centers, inertia, n_iter, history)


def nearest_centroid(points, centroids):
    """(labels, Euclidean distance to the nearest centroid)."""
    x = np.atleast_2d(np.asarray(points, dtype=np.float64))
    c = np.asarray(centroids, dtype=np.float64)
    diff = x[:, None, :] - c[None, :, :]
    d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    labels = d.argmin(axis=1)
    return labels, d[np.arange(len(x)), labels]


# -- validity indices -------------------------------------------------------

def _prepare(points, labels):
    x = np.asarray(points, dtype=np.float64)
    labels = np.asarray(labels)
    if x.ndim != 2 or labels.shape != (x.shape[0],):
        raise InvalidInputError("points must be (n, d) with one label per point")
    uniq, inv = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        raise UndefinedMetricError("index undefined for fewer than 2 clusters")
    return x, inv.astype(np.int64), len(uniq)


def silhouette_samples(points, labels):
    x, lab, k = _prepare(points, labels)
    sums = _core.cluster_distance_sums(np.ascontiguousarray(x), lab, k)
    counts = np.bincount(lab, minlength=k).astype(np.float64)
    n = len(lab)
    own = counts[lab]
    a = np.where(own > 1, sums[np.arange(n), lab] / np.maximum(own - 1, 1), 0.0)
    mean_other = sums / counts[None, :]
    mean_other[np.arange(n), lab] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    s[own == 1] = 0.0
    return s


def silhouette(points, labels):
    """Mean silhouette coefficient; points in singleton clusters contribute 0."""
    return float(np.mean(silhouette_samples(points, labels)))


def calinski_harabasz(points, labels, return_flag=False):
    """(tr B / (k-1)) / (tr W / (n-k)). Zero within-cluster dispersion gives DEGENERATE."""
    x, lab, k = _prepare(points, labels)
    n = len(lab)
    mean = x.mean(axis=0)
    between = within = 0.0
    for c in range(k):
        members = x[lab == c]
        centre = members.mean(axis=0)
        between += len(members) * float(((centre - mean) ** 2).sum())
        within += float(((members - centre) ** 2).sum())
    if within == 0.0 or n == k:
        value, flag = DEGENERATE, True
    else:
        value, flag = (between / (k - 1)) / (within / (n - k)), False
    return (value, flag) if return_flag else value


def davies_bouldin(points, labels, return_flag=False):
    """Mean over clusters of the worst (S_i + S_j) / M_ij. Coincident centroids give DEGENERATE."""
    x, lab, k = _prepare(points, labels)
    centres = np.stack([x[lab == c].mean(axis=0) for c in range(k)])
    scatter = np.array([np.sqrt(((x[lab == c] - centres[c]) ** 2).sum(1)).mean()
                        for c in range(k)])
    flag = False
    worst = np.zeros(k)
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            m = float(np.sqrt(((centres[i] - centres[j]) ** 2).sum()))
            if m == 0.0:
                r, flag = DEGENERATE, True
            else:
                r = (scatter[i] + scatter[j]) / m
            worst[i] = max(worst[i], r)
    value = DEGENERATE if flag else float(worst.mean())
    return (value, flag) if return_flag else value


def adjusted_rand_index(truth, pred):
    truth = np.unique(np.asarray(truth), return_inverse=True)[1]
    pred = np.unique(np.asarray(pred), return_inverse=True)[1]
    n = len(truth)
    table = np.zeros((truth.max() + 1, pred.max() + 1), dtype=np.int64)
    np.add.at(table, (truth, pred), 1)

    def pairs(v):
        v = np.asarray(v, dtype=np.float64)
        return float((v * (v - 1) / 2).sum())

    index = pairs(table.ravel())
    rows, cols = pairs(table.sum(1)), pairs(table.sum(0))
    expected = rows * cols / (n * (n - 1) / 2) if n > 1 else 0.0
    maximum = (rows + cols) / 2
    if maximum == expected:
        return 1.0
    return (index - expected) / (maximum - expected)


# -- elbow --------------------------------------------------------------------

@dataclass
class MetricRow:
    k: int
    silhouette: float
    calinski_harabasz: float
    davies_bouldin: float
    inertia: float


def elbow_select(points, k_range, seed=0, restarts=DEFAULT_RESTARTS):
    """Run K-Means over `k_range`; pick the k with best silhouette.

    Ties go to the lower Davies-Bouldin index, then to the smaller k.
    Returns (k_prime, curve, fits) where fits maps k to its KMeansResult.
    """
    x = np.asarray(points, dtype=np.float64)
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise InvalidInputError("empty k range")
    if ks[0] < 2 or ks[-1] > x.shape[0] - 1:
        raise InvalidInputError(f"k range must lie within [2, {x.shape[0] - 1}]")
    curve, fits = [], {}
    for k in ks:
        fit = kmeans_fit(x, k, seed=seed, restarts=restarts)
        fits[k] = fit
        if len(np.unique(fit.labels)) < 2:
            raise UndefinedMetricError(f"k={k} produced a single cluster")
        curve.append(MetricRow(k, silhouette(x, fit.labels), calinski_harabasz(x, fit.labels),
                               davies_bouldin(x, fit.labels), fit.inertia))
        log.debug("elbow k=%d silhouette=%.4f db=%.4f", k, curve[-1].silhouette,
                  curve[-1].davies_bouldin)
    best = min(curve, key=lambda r: (-r.silhouette, r.davies_bouldin, r.k))
    return best.k, curve, fits


def write_metric_curve(path, curve):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "silhouette", "calinski_harabasz", "davies_bouldin"])
        for r in curve:
            w.writerow([r.k, repr(r.silhouette), repr(r.calinski_harabasz),
                        repr(r.davies_bouldin)])


@dataclass
class ClusterModel:
    """Calibrated K-Means partition of the embedding space plus novelty threshold."""

    k_prime: int
    centroids: np.ndarray
    distance_percentiles: dict
    percentile: float = None
    threshold: float = None

    def __post_init__(self):
        if self.k_prime < 2 or self.centroids.shape[0] != self.k_prime:
            raise InvalidInputError("cluster model needs k' >= 2 centroids")
        vals = [self.distance_percentiles[k] for k in sorted(self.distance_percentiles,
                                                             key=float)]
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise InvalidInputError("distance percentiles must be non-decreasing")

    @property
    def calibrated(self):
        return self.threshold is not None

    def assign(self, embeddings):
        return nearest_centroid(embeddings, self.centroids)
