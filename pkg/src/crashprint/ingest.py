"""Trace parsing, metric vocabulary, and homogenization into fixed t x m tensors."""

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import store
from .errors import InvalidInputError, ModelMismatchError, ThresholdTooStrictError

log = logging.getLogger(__name__)

DEFAULT_TIMESTEPS = 100
DEFAULT_PRESENCE_THRESHOLD = 0.05
SPLITS = ("train", "validation", "production")


@dataclass
class RawTrace:
    """One crashing session: metric name -> [(timestep, value), ...]."""

    session_id: str
    metrics: dict

    def __post_init__(self):
        if not self.metrics:
            raise InvalidInputError(f"session {self.session_id!r} has no metrics")
        clean = {}
        for name, readings in self.metrics.items():
            steps = [int(r[0]) for r in readings]
            values = [float(r[1]) for r in readings]
            if any(b <= a for a, b in zip(steps, steps[1:])):
                raise InvalidInputError(
                    f"session {self.session_id!r}, metric {name!r}: timesteps not strictly increasing")
            if not all(math.isfinite(v) for v in values):
                raise InvalidInputError(
                    f"session {self.session_id!r}, metric {name!r}: non-finite value")
            if any(v < 0 for v in values):
                raise InvalidInputError(
                    f"session {self.session_id!r}, metric {name!r}: negative count")
            clean[str(name)] = (steps, values)
        self.metrics = clean

    def present(self, name):
        """True when `name` has at least one non-zero reading."""
        entry = self.metrics.get(name)
        return entry is not None and any(v != 0 for v in entry[1])

    def values(self, name):
        entry = self.metrics.get(name)
        return [] if entry is None else entry[1]

    def to_json(self):
        return {"session_id": self.session_id,
                "metrics": {k: [[s, v] for s, v in zip(*self.metrics[k])]
                            for k in sorted(self.metrics)}}


@dataclass(frozen=True)
class MetricVocabulary:
    names: tuple
    presence_threshold: float = DEFAULT_PRESENCE_THRESHOLD

    def __post_init__(self):
        if list(self.names) != sorted(set(self.names)):
            raise InvalidInputError("vocabulary names must be sorted and unique")

    def __len__(self):
        return len(self.names)

    @property
    def hash(self):
        return hashlib.sha256("\n".join(self.names).encode()).hexdigest()[:16]

    def index(self):
        return {name: i for i, name in enumerate(self.names)}

    def to_json(self):
        return {"names": list(self.names), "presence_threshold": self.presence_threshold}

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(obj["names"]), float(obj["presence_threshold"]))


@dataclass
class TraceTensor:
    session_id: str
    values: np.ndarray
    vocabulary_ref: str
    raw: np.ndarray = None


@dataclass
class Dataset:
    """A batch of homogenized sessions sharing one vocabulary.

    `values` holds the scaled (n, t, m) model inputs; `raw` holds the same
    trimmed and padded readings before scaling, which the explainer needs for
    magnitude comparisons.
    """

    session_ids: list
    values: np.ndarray
    vocabulary: MetricVocabulary
    raw: np.ndarray = None
    split: str = "train"
    labels: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.split not in SPLITS:
            raise InvalidInputError(f"unknown split {self.split!r}")
        if self.values.ndim != 3 or self.values.shape[0] != len(self.session_ids):
            raise InvalidInputError("values must be (n, t, m) with one row per session")
        if self.values.shape[2] != len(self.vocabulary):
            raise InvalidInputError("tensor width does not match vocabulary size")
        if len(set(self.session_ids)) != len(self.session_ids):
            raise InvalidInputError("duplicate session ids in dataset")

    def __len__(self):
        return len(self.session_ids)

    @property
    def t(self):
        return self.values.shape[1]

    @property
    def m(self):
        return self.values.shape[2]

    def stacked(self):
        return stack_batch(self.values)

    def subset(self, idx, split=None):
        idx = np.asarray(idx)
        return Dataset([self.session_ids[i] for i in idx], self.values[idx], self.vocabulary,
                       None if self.raw is None else self.raw[idx], split or self.split,
                       None if self.labels is None else self.labels[idx])

    def __iter__(self):
        for i, sid in enumerate(self.session_ids):
            yield TraceTensor(sid, self.values[i], self.vocabulary.hash,
                              None if self.raw is None else self.raw[i])


def build_vocabulary(traces, presence_threshold=DEFAULT_PRESENCE_THRESHOLD):
    """Keep the metrics that are present in more than `presence_threshold` of traces."""
    if not traces:
        raise InvalidInputError("cannot build a vocabulary from zero traces")
    if not 0.0 <= presence_threshold <= 1.0:
        raise InvalidInputError("presence_threshold must be in [0, 1]")
    counts = {}
    for tr in traces:
        for name in tr.metrics:
            if tr.present(name):
                counts[name] = counts.get(name, 0) + 1
    n = len(traces)
    names = sorted(k for k, c in counts.items() if c / n > presence_threshold)
    if not names:
        raise ThresholdTooStrictError(
            f"no metric is present in more than {presence_threshold:.3f} of {n} traces")
    return MetricVocabulary(tuple(names), float(presence_threshold))


def scale_column(series):
    """Min-max scale to [0, 1]; a constant series maps to zeros."""
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        return x
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def _fit_column(values, t):
    col = np.zeros(t, dtype=np.float64)
    tail = values[-t:]
    if tail:
        col[t - len(tail):] = tail
    return col


def homogenize(trace, vocab, t=DEFAULT_TIMESTEPS, keep_raw=False):
    """Trim/pad every vocabulary metric of `trace` to `t` readings and scale per column."""
    if t < 1:
        raise InvalidInputError("t must be >= 1")
    raw = np.zeros((t, len(vocab)), dtype=np.float64)
    for j, name in enumerate(vocab.names):
        vals = trace.values(name)
        if vals:
            raw[:, j] = _fit_column(list(vals), t)
    scaled = np.empty_like(raw)
    for j in range(raw.shape[1]):
        scaled[:, j] = scale_column(raw[:, j])
    return TraceTensor(trace.session_id, scaled.astype(np.float32), vocab.hash,
                       raw.astype(np.float32) if keep_raw else None)


def build_dataset(traces, vocab, t=DEFAULT_TIMESTEPS, split="train"):
    tensors = [homogenize(tr, vocab, t, keep_raw=True) for tr in traces]
    if not tensors:
        raise InvalidInputError("no traces to homogenize")
    values = np.stack([tt.values for tt in tensors])
    raw = np.stack([tt.raw for tt in tensors])
    return Dataset([tt.session_id for tt in tensors], values, vocab, raw, split)


def stack(values):
    """Column-major flatten of one (t, m) tensor: metric columns laid end to end."""
    return np.asarray(values).reshape(-1, order="F")


def unstack(flat, t, m):
    return np.asarray(flat).reshape((t, m), order="F")


def stack_batch(values):
    values = np.asarray(values)
    n = values.shape[0]
    return np.ascontiguousarray(values.transpose(0, 2, 1)).reshape(n, -1)


def unstack_batch(flat, t, m):
    flat = np.asarray(flat)
    return np.ascontiguousarray(flat.reshape(flat.shape[0], m, t).transpose(0, 2, 1))


# -- file formats -----------------------------------------------------------

def read_traces(path):
    traces = []
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                tr = RawTrace(str(obj["session_id"]), obj["metrics"])
            except (KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, InvalidInputError):
                    raise
                raise InvalidInputError(f"{path}:{lineno}: malformed trace ({exc})") from exc
            if tr.session_id in seen:
                raise InvalidInputError(f"{path}:{lineno}: duplicate session {tr.session_id!r}")
            seen.add(tr.session_id)
            traces.append(tr)
    if not traces:
        raise InvalidInputError(f"{path}: no traces found")
    return traces


def write_traces(path, traces):
    with open(path, "w") as fh:
        for tr in traces:
            fh.write(json.dumps(tr.to_json(), sort_keys=True) + "\n")


def save_dataset(path, ds, extra=None):
    header = {"session_ids": list(ds.session_ids), "vocabulary": ds.vocabulary.to_json(),
              "vocabulary_hash": ds.vocabulary.hash, "split": ds.split,
              "t": ds.t, "m": ds.m}
    if extra:
        header.update(extra)
    arrays = {"values": ds.values.astype(np.float32)}
    if ds.raw is not None:
        arrays["raw"] = ds.raw.astype(np.float32)
    return store.save(path, "tensors", header, arrays)


def load_dataset(path):
    header, arrays = store.load(path, kind="tensors")
    vocab = MetricVocabulary.from_json(header["vocabulary"])
    if vocab.hash != header["vocabulary_hash"]:
        raise ModelMismatchError(f"{path}: vocabulary hash does not match its names")
    return Dataset(header["session_ids"], arrays["values"], vocab, arrays.get("raw"),
                   header["split"])
