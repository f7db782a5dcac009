import io
import json

import numpy as np
import pytest

from crashprint.cluster import ClusterModel
from crashprint.emerging import (assess, assess_many, calibrate_threshold, distance_percentiles,
                                 write_verdicts)
from crashprint.errors import InvalidInputError, InvalidStateError

CENTROIDS = np.array([[0.0, 0.0], [10.0, 0.0]])


def model(threshold=1.0):
    return ClusterModel(2, CENTROIDS, {"0.5": 0.5, "1": 1.0}, 0.95, threshold)


def test_constant_distance_threshold():
    angles = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    z = 2.0 * np.c_[np.cos(angles), np.sin(angles)]
    assert calibrate_threshold(z, CENTROIDS, 0.95) == pytest.approx(2.0)


def test_full_percentile_flags_nothing_from_validation():
    z = np.random.default_rng(0).normal(size=(50, 2))
    thr = calibrate_threshold(z, CENTROIDS, 1.0)
    verdicts = assess_many(z, ClusterModel(2, CENTROIDS, {"1": thr}, 1.0, thr), [str(i) for i in range(50)])
    assert not any(v.flagged for v in verdicts)


def test_threshold_is_linear_interpolated_quantile():
    z = np.c_[np.arange(1, 21, dtype=float), np.zeros(20)] * 0.1
    d = np.sort(np.linalg.norm(z, axis=1))
    pos = 0.95 * 19
    expected = d[int(pos)] + (pos - int(pos)) * (d[int(pos) + 1] - d[int(pos)])
    assert calibrate_threshold(z, CENTROIDS, 0.95) == pytest.approx(expected)


def test_percentile_validation():
    with pytest.raises(InvalidInputError):
        calibrate_threshold(np.zeros((3, 2)), CENTROIDS, 95)
    with pytest.raises(InvalidInputError):
        calibrate_threshold(np.zeros((0, 2)), CENTROIDS)


def test_percentile_table_monotone():
    z = np.random.default_rng(1).normal(size=(40, 2)) * 3
    table = distance_percentiles(z, CENTROIDS)
    assert list(table) == ["0.5", "0.9", "0.95", "0.99", "1"]
    vals = list(table.values())
    assert vals == sorted(vals)


def test_assess_boundaries():
    cm = model(threshold=1.0)
    v = assess(CENTROIDS[1], cm, "s")
    assert (v.nearest_centroid, v.distance, v.flagged) == (1, 0.0, False)
    assert assess([1.0, 0.0], cm).flagged is False
    assert assess([1.0 + 1e-9, 0.0], cm).flagged is True


def test_uncalibrated_rejected():
    with pytest.raises(InvalidStateError):
        assess([0.0, 0.0], model(threshold=None))
    with pytest.raises(InvalidStateError):
        assess_many(np.zeros((1, 2)), None, ["a"])


def test_verdict_jsonl():
    buf = io.StringIO()
    write_verdicts(buf, assess_many(np.array([[0.0, 3.0], [9.0, 0.0]]), model(), ["a", "b"]))
    rows = [json.loads(line) for line in buf.getvalue().splitlines()]
    assert rows == [{"session_id": "a", "cluster": 0, "distance": 3.0, "flagged": True},
                    {"session_id": "b", "cluster": 1, "distance": 1.0, "flagged": False}]
