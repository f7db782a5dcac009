"""Synthetic crash sessions with known archetypes.

Each archetype owns one or more signature objects that ramp, plateau or
oscillate towards the crash. Every session also carries a set of common
objects (same shape for all archetypes) and a sprinkling of sparse objects
that fire briefly at random. Session lengths vary so both trimming and
left-padding get exercised.
"""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError
from .ingest import RawTrace
from .numerics import Rng

SHAPES = ("ramp", "plateau", "sawtooth", "exponential", "step", "hump")


@dataclass
class SyntheticSpec:
    archetypes: int = 4
    sessions_per_archetype: int = 100
    metrics: int = 40
    t: int = 50
    common: int = 8
    signature_size: int = 1
    signature_rate: float = 1.0
    noise: float = 0.05
    sparsity: float = 0.08
    seed: int = 0
    layout_seed: int = 0

    def __post_init__(self):
        if self.archetypes < 2:
            raise InvalidInputError("need at least 2 archetypes")
        if self.archetypes * self.signature_size + self.common > self.metrics:
            raise InvalidInputError("not enough metrics for signatures plus common objects")

    def to_json(self):
        return asdict(self)


def metric_name(j):
    return f"obj_{j:03d}"


def signature_objects(spec, archetype):
    start = archetype * spec.signature_size
    return [metric_name(j) for j in range(start, start + spec.signature_size)]


def _shape(kind, length, phase, horizon):
    # aligned on the crash: u runs 0 -> 1 over the final `horizon` steps
    u = np.clip((np.arange(length) - (length - horizon)) / max(horizon - 1, 1), 0.0, 1.0)
    if kind == "ramp":
        return u
    if kind == "plateau":
        return np.where(u > 0.3 + 0.2 * phase, 1.0, 0.15)
    if kind == "sawtooth":
        return (u * (3 + 2 * phase)) % 1.0
    if kind == "exponential":
        return np.expm1(4 * u) / np.expm1(4)
    if kind == "step":
        return np.floor(u * 4) / 3
    return np.exp(-((u - 0.5 - 0.2 * phase) ** 2) / 0.02)


def _session(spec, archetype, idx, rng, common_shapes):
    length = int(rng.integers(int(0.9 * spec.t), 2 * spec.t + 1))
    steps = list(range(length))
    metrics = {}

    def put(name, series):
        series = np.maximum(series, 0.0)
        metrics[name] = [[s, float(round(v, 6))] for s, v in zip(steps, series)]

    for name in common_shapes:
        kind, phase, scale = common_shapes[name]
        base = _shape(kind, length, phase, spec.t)
        put(name, scale * (0.2 + base + spec.noise * rng.normal(length)))
    if rng.uniform(0, 1, None) < spec.signature_rate:
        for s, name in enumerate(signature_objects(spec, archetype)):
            kind = SHAPES[(archetype + s) % len(SHAPES)]
            sig = _shape(kind, length, (archetype % 3) / 3, spec.t)
            put(name, 50.0 * (sig + spec.noise * rng.normal(length)))
    sparse_start = spec.archetypes * spec.signature_size + spec.common
    for j in range(sparse_start, spec.metrics):
        if rng.uniform(0, 1, None) < spec.sparsity:
            series = np.zeros(length)
            at = int(rng.integers(length))
            width = int(rng.integers(1, 4))
            series[at:at + width] = rng.uniform(1.0, 5.0, None)
            put(metric_name(j), series)
    if not metrics:
        put(metric_name(sparse_start), np.ones(length))
    return RawTrace(f"r{spec.seed}-a{archetype}-s{idx:05d}", metrics)


def generate(spec, archetypes=None):
    """Return (traces, labels) where labels maps session_id -> archetype.

    `archetypes` restricts output to a subset of archetype indices; the
    random stream per archetype does not depend on which others are drawn.
    """
    root = Rng(spec.seed)
    # object layout is shared by every split drawn with the same layout_seed
    shape_rng = Rng(spec.layout_seed)
    common_start = spec.archetypes * spec.signature_size
    common_shapes = {}
    for k in range(spec.common):
        kind = SHAPES[int(shape_rng.integers(len(SHAPES)))]
        common_shapes[metric_name(common_start + k)] = (
            kind, float(shape_rng.uniform(0, 1, None)), float(shape_rng.uniform(5, 20, None)))
    chosen = range(spec.archetypes) if archetypes is None else archetypes
    traces, labels = [], {}
    for a in chosen:
        if not 0 <= a < spec.archetypes:
            raise InvalidInputError(f"archetype {a} out of range")
        rng = root.spawn(1000 + a)
        for i in range(spec.sessions_per_archetype):
            tr = _session(spec, a, i, rng, common_shapes)
            traces.append(tr)
            labels[tr.session_id] = a
    return traces, labels
