"""Contrastive cluster explanations.

Each cluster is compared against all other clusters combined: how often an
object is present (any non-zero reading), how often it is absent, and how
large its values are when present. Mutation tests zero out present objects
or fill absent ones with their average, then check whether the session
changes cluster.
"""

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .embed import embed_matrix
from .errors import InvalidInputError
from .ingest import stack_batch

log = logging.getLogger(__name__)

DEFAULT_TOP_N = 3
DEFAULT_MIN_PRESENCE = 0.05


def f_score(in_pct, other_pct):
    """in% / (in% + (in% + other%)/2); zero when the object never occurs in the cluster."""
    in_pct = np.asarray(in_pct, dtype=np.float64)
    other_pct = np.asarray(other_pct, dtype=np.float64)
    denom = in_pct + 0.5 * (in_pct + other_pct)
    out = np.divide(in_pct, denom, out=np.zeros(np.broadcast(in_pct, other_pct).shape),
                    where=denom > 0)
    return out if out.ndim else float(out)


@dataclass
class ExplanationRow:
    rank: int
    object_name: str
    presence_pct: float
    other_pct: float
    f1: float


@dataclass
class ExplanationTable:
    kind: str
    clusters: dict = field(default_factory=dict)

    def rows(self):
        for cluster in sorted(self.clusters):
            for row in self.clusters[cluster]:
                yield cluster, row


def _inputs(dataset, labels):
    values = dataset.raw if dataset.raw is not None else dataset.values
    labels = np.asarray(labels)
    if labels.shape != (len(dataset),):
        raise InvalidInputError("need exactly one label per session")
    return values, labels, list(dataset.vocabulary.names)


def _cluster_ids(labels, clusters):
    if clusters is None:
        return sorted(int(c) for c in np.unique(labels))
    out = []
    for c in clusters:
        if not np.any(labels == c):
            warnings.warn(f"cluster {c} has no sessions; skipped", RuntimeWarning)
            continue
        out.append(int(c))
    return out


def _contrast(indicator, labels, names, top_n, kind, clusters):
    """indicator: (n, m) boolean per session/object."""
    table = ExplanationTable(kind)
    for c in _cluster_ids(labels, clusters):
        inside = labels == c
        in_pct = indicator[inside].mean(axis=0)
        other_pct = indicator[~inside].mean(axis=0) if np.any(~inside) else np.zeros(len(names))
        f = f_score(in_pct, other_pct)
        order = sorted(range(len(names)), key=lambda j: (-f[j], names[j]))[:top_n]
        table.clusters[c] = [ExplanationRow(r + 1, names[j], float(in_pct[j]),
                                            float(other_pct[j]), float(f[j]))
                             for r, j in enumerate(order)]
    return table


def presence_matrix(values):
    return np.any(np.asarray(values) != 0, axis=1)


def presence_table(dataset, labels, top_n=DEFAULT_TOP_N, clusters=None):
    values, labels, names = _inputs(dataset, labels)
    return _contrast(presence_matrix(values), labels, names, top_n, "presence", clusters)


def absence_table(dataset, labels, top_n=DEFAULT_TOP_N, clusters=None):
    values, labels, names = _inputs(dataset, labels)
    return _contrast(~presence_matrix(values), labels, names, top_n, "absence", clusters)


@dataclass
class AverageRow:
    rank: int
    object_name: str
    mean_in: float
    mean_other: float
    ratio: float


def _present_mean(values, rows, j):
    col = values[rows][:, :, j]
    nz = col[col != 0]
    return float(nz.astype(np.float64).mean()) if nz.size else 0.0


def average_value_table(dataset, labels, min_presence=DEFAULT_MIN_PRESENCE,
                        top_n=DEFAULT_TOP_N, clusters=None):
    """Per cluster, objects ranked by |log(mean_in / mean_other)|.

    Means run over the non-zero timesteps of the sessions where the object is
    present. Objects present in fewer than `min_presence` of the cluster's
    sessions are excluded, as are rows with a zero mean on either side.
    """
    if not 0.0 <= min_presence <= 1.0:
        raise InvalidInputError("min_presence must be in [0, 1]")
    values, labels, names = _inputs(dataset, labels)
    present = presence_matrix(values)
    table = {}
    for c in _cluster_ids(labels, clusters):
        inside = labels == c
        rows = []
        for j, name in enumerate(names):
            if present[inside, j].mean() < min_presence:
                continue
            mean_in = _present_mean(values, inside, j)
            mean_other = _present_mean(values, ~inside, j)
            if mean_in == 0 or mean_other == 0:
                continue
            rows.append((name, mean_in, mean_other, mean_in / mean_other))
        rows.sort(key=lambda r: (-abs(math.log(r[3])), r[0]))
        table[c] = [AverageRow(i + 1, *r) for i, r in enumerate(rows[:top_n])]
    return table


def object_averages(values):
    """Mean of each object's non-zero entries across all sessions (0 if never present)."""
    v = np.asarray(values, dtype=np.float64)
    nz = v != 0
    counts = nz.sum(axis=(0, 1))
    sums = np.where(nz, v, 0.0).sum(axis=(0, 1))
    return np.divide(sums, counts, out=np.zeros(v.shape[2]), where=counts > 0)


@dataclass
class MutationRecord:
    session_id: str
    cluster: int
    object_name: str
    kind: str
    original: int
    mutated: int

    @property
    def changed(self):
        return self.original != self.mutated


@dataclass
class MutationReport:
    records: list = field(default_factory=list)

    def rates(self, kind=None):
        """{(cluster, object): (changed, total)} for the given mutation kind."""
        out = {}
        for r in self.records:
            if kind is not None and r.kind != kind:
                continue
            key = (r.cluster, r.object_name)
            ch, tot = out.get(key, (0, 0))
            out[key] = (ch + r.changed, tot + 1)
        return out

    def change_rate(self, kind=None, cluster=None, object_name=None):
        sel = [r for r in self.records
               if (kind is None or r.kind == kind)
               and (cluster is None or r.cluster == cluster)
               and (object_name is None or r.object_name == object_name)]
        return sum(r.changed for r in sel) / len(sel) if sel else float("nan")


def mutation_test(model, cluster_model, dataset, labels=None, objects=None, averages=None):
    """Mutate each (session, object) pair, re-embed, and re-assign.

    Present objects are zeroed; absent ones are filled with the object's
    average value. Mutations act on the scaled tensors the model consumes,
    and averages default to those computed over `dataset` itself.
    """
    values = np.asarray(dataset.values)
    n, t, m = values.shape
    names = list(dataset.vocabulary.names)
    if averages is None:
        averages = object_averages(values)
    cols = range(m) if objects is None else [names.index(o) if isinstance(o, str) else int(o)
                                             for o in objects]
    cols = list(cols)
    original, _ = cluster_model.assign(embed_matrix(model, stack_batch(values)))
    groups = original if labels is None else np.asarray(labels)
    present = presence_matrix(values)
    report = MutationReport()
    for i in range(n):
        batch = np.repeat(values[i][None], len(cols), axis=0)
        kinds = []
        for b, j in enumerate(cols):
            if present[i, j]:
                batch[b, :, j] = 0.0
                kinds.append("zero-out")
            else:
                batch[b, :, j] = averages[j]
                kinds.append("fill-average")
        mutated, _ = cluster_model.assign(embed_matrix(model, stack_batch(batch)))
        for b, j in enumerate(cols):
            report.records.append(MutationRecord(dataset.session_ids[i], int(groups[i]),
                                                 names[j], kinds[b], int(original[i]),
                                                 int(mutated[b])))
    return report


# -- output -------------------------------------------------------------------

def format_table(table):
    header = f"{'Cluster':>7}  {'Rank':>4}  {'Object':<32} {'Presence %':>10} {'Other %':>8} {'F1':>5}"
    if table.kind == "absence":
        header = header.replace("Presence %", " Absence %")
    lines = [header, "-" * len(header)]
    for cluster in sorted(table.clusters):
        for row in table.clusters[cluster]:
            lead = str(cluster) if row.rank == 1 else ""
            lines.append(f"{lead:>7}  {row.rank:>4}  {row.object_name:<32} "
                         f"{row.presence_pct:>10.2f} {row.other_pct:>8.2f} {row.f1:>5.2f}")
    return "\n".join(lines)


def write_table_csv(path, table):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        pct = "absence_pct" if table.kind == "absence" else "presence_pct"
        w.writerow(["cluster", "rank", "object_name", pct, "other_pct", "f1"])
        for cluster, r in table.rows():
            w.writerow([cluster, r.rank, r.object_name, repr(r.presence_pct),
                        repr(r.other_pct), repr(r.f1)])


def write_average_csv(path, table):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "rank", "object_name", "mean_in", "mean_other", "ratio"])
        for cluster in sorted(table):
            for r in table[cluster]:
                w.writerow([cluster, r.rank, r.object_name, repr(r.mean_in),
                            repr(r.mean_other), repr(r.ratio)])


def write_mutation_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "object_name", "kind", "changed", "total", "change_rate"])
        summary = {}
        for r in report.records:
            key = (r.cluster, r.object_name, r.kind)
            ch, tot = summary.get(key, (0, 0))
            summary[key] = (ch + r.changed, tot + 1)
        for (cluster, name, kind), (ch, tot) in sorted(summary.items()):
            w.writerow([cluster, name, kind, ch, tot, repr(ch / tot)])
