"""Novelty detection: flag embeddings that sit unusually far from every calibrated centroid."""

import json
from dataclasses import dataclass

import numpy as np

from .cluster import nearest_centroid
from .errors import InvalidInputError, InvalidStateError

DEFAULT_PERCENTILE = 0.95
REPORTED_PERCENTILES = (0.5, 0.9, 0.95, 0.99, 1.0)


@dataclass
class EmergingVerdict:
    session_id: str
    nearest_centroid: int
    distance: float
    threshold: float
    flagged: bool

    def to_json(self):
        return {"session_id": self.session_id, "cluster": self.nearest_centroid,
                "distance": self.distance, "flagged": self.flagged}


def calibrate_threshold(validation_embeddings, centroids, percentile=DEFAULT_PERCENTILE):
    """Distance threshold at `percentile` (a fraction) of nearest-centroid distances."""
    z = np.asarray(validation_embeddings, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise InvalidInputError("threshold calibration needs a non-empty validation set")
    if not 0.0 <= percentile <= 1.0:
        raise InvalidInputError("percentile must be a fraction in [0, 1]")
    _, dist = nearest_centroid(z, centroids)
    return float(np.quantile(dist, percentile))


def distance_percentiles(validation_embeddings, centroids, levels=REPORTED_PERCENTILES):
    _, dist = nearest_centroid(validation_embeddings, centroids)
    return {f"{q:g}": float(np.quantile(dist, q)) for q in levels}


def assess(embedding, cluster_model, session_id=""):
    if cluster_model is None or not cluster_model.calibrated:
        raise InvalidStateError("cluster model has no calibrated threshold")
    labels, dist = nearest_centroid(np.atleast_2d(embedding), cluster_model.centroids)
    d = float(dist[0])
    return EmergingVerdict(session_id, int(labels[0]), d, cluster_model.threshold,
                           d > cluster_model.threshold)


def assess_many(embeddings, cluster_model, session_ids):
    if cluster_model is None or not cluster_model.calibrated:
        raise InvalidStateError("cluster model has no calibrated threshold")
    labels, dist = nearest_centroid(embeddings, cluster_model.centroids)
    thr = cluster_model.threshold
    return [EmergingVerdict(sid, int(lab), float(d), thr, bool(d > thr))
            for sid, lab, d in zip(session_ids, labels, dist)]


def write_verdicts(path_or_fh, verdicts):
    lines = "".join(json.dumps(v.to_json(), sort_keys=True) + "\n" for v in verdicts)
    if hasattr(path_or_fh, "write"):
        path_or_fh.write(lines)
    else:
        with open(path_or_fh, "w") as fh:
            fh.write(lines)

