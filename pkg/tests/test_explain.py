import numpy as np
import pytest

from crashprint import explain
from crashprint.cluster import ClusterModel
from crashprint.embed import Autoencoder
from crashprint.ingest import Dataset, MetricVocabulary
from crashprint.numerics import Rng


def dataset(values, names=None, raw=None):
    n, t, m = values.shape
    names = names or tuple(f"o{j}" for j in range(m))
    return Dataset([f"s{i}" for i in range(n)], values.astype(np.float32), MetricVocabulary(names),
                   raw=raw)


def test_f_score_examples():
    assert explain.f_score(0.50, 0.12) == pytest.approx(0.62, abs=0.005)
    assert explain.f_score(0.72, 0.08) == pytest.approx(0.64, abs=0.005)
    assert explain.f_score(0.3, 0.3) == pytest.approx(0.5)
    assert explain.f_score(0.0, 0.4) == 0.0


def test_presence_table_ranks_defining_object():
    rng = np.random.default_rng(0)
    v = np.zeros((20, 4, 3))
    labels = np.repeat([0, 1], 10)
    v[:, :, 2] = rng.uniform(0.1, 1, (20, 4))
    v[labels == 0, :, 0] = 1.0
    v[labels == 1, :, 1] = 1.0
    table = explain.presence_table(dataset(v), labels, top_n=2)
    assert table.clusters[0][0].object_name == "o0"
    assert table.clusters[1][0].object_name == "o1"
    assert table.clusters[0][0].presence_pct == 1.0 and table.clusters[0][0].other_pct == 0.0
    assert table.clusters[0][0].f1 == pytest.approx(2 / 3)


def test_absence_table():
    v = np.zeros((10, 3, 3))
    labels = np.repeat([0, 1], 5)
    v[:, :, 1] = 1.0
    v[labels == 1, :, 1] = 0.0  # cluster 1 omits o1
    v[:, :, 2] = 0.0  # o2 absent everywhere
    absent = explain.absence_table(dataset(v), labels, top_n=3)
    assert absent.clusters[1][0].object_name == "o1"
    for c in (0, 1):
        row = next(r for r in absent.clusters[c] if r.object_name == "o2")
        assert row.presence_pct == 1.0 and row.f1 == pytest.approx(0.5)
    present = explain.presence_table(dataset(v), labels, top_n=3)
    for c in (0, 1):
        p = {r.object_name: r.presence_pct for r in present.clusters[c]}
        a = {r.object_name: r.presence_pct for r in absent.clusters[c]}
        for name in p:
            assert p[name] + a[name] == pytest.approx(1.0)


def test_empty_cluster_skipped_with_warning():
    v = np.ones((4, 2, 2))
    with pytest.warns(RuntimeWarning):
        table = explain.presence_table(dataset(v), [0, 0, 1, 1], clusters=[0, 5])
    assert list(table.clusters) == [0]


def test_average_table():
    rng = np.random.default_rng(1)
    labels = np.repeat([0, 1, 2], 30)
    raw = np.zeros((90, 5, 4))
    raw[:, :, 0] = 0.5  # constant wherever present
    raw[:, :, 1] = rng.uniform(1, 2, (90, 5))
    raw[labels == 2, :, 1] *= 2.0  # doubled magnitude in cluster 2
    raw[:, :, 2] = rng.uniform(1, 2, (90, 5))
    raw[np.flatnonzero(labels == 0)[:1], :, 3] = 7.0  # 1 of 30 sessions: under 5%
    raw[labels != 0, :, 3] = 1.0
    ds = dataset(raw / raw.max(), raw=raw)
    table = explain.average_value_table(ds, labels, top_n=4)
    ratios = {c: {r.object_name: r.ratio for r in rows} for c, rows in table.items()}
    assert all(ratios[c]["o0"] == pytest.approx(1.0) for c in ratios)
    assert ratios[2]["o1"] == pytest.approx(2.0, rel=0.05)
    assert table[2][0].object_name == "o1"
    assert "o3" not in ratios[0]


def test_object_averages_ignore_zeros():
    v = np.zeros((2, 3, 2))
    v[0, :, 0] = [0, 2, 4]
    np.testing.assert_allclose(explain.object_averages(v), [3.0, 0.0])


@pytest.fixture
def toy_model():
    model = Autoencoder.build(12, z_len=2, rng=Rng(0))
    rng = np.random.default_rng(0)
    v = rng.uniform(0, 1, (6, 4, 3)).astype(np.float32)
    v[:, :, 2] = 0.0
    z = model.encode(v.reshape(6, -1, order="F"))[0]
    cm = ClusterModel(2, np.array([z[0], z[1]], dtype=np.float64), {"1": 1.0}, 0.95, 1.0)
    return model, cm, dataset(v)


def test_noop_mutation_keeps_label(toy_model):
    model, cm, ds = toy_model
    report = explain.mutation_test(model, cm, ds, objects=["o2"], averages=np.zeros(3))
    assert all(r.kind == "fill-average" for r in report.records)
    assert report.change_rate() == 0.0


def test_mutation_report_bookkeeping(toy_model, tmp_path):
    model, cm, ds = toy_model
    a = explain.mutation_test(model, cm, ds)
    b = explain.mutation_test(model, cm, ds)
    assert [r.mutated for r in a.records] == [r.mutated for r in b.records]
    assert len(a.records) == 6 * 3
    assert {r.kind for r in a.records if r.object_name == "o0"} == {"zero-out"}
    rates = a.rates("zero-out")
    assert sum(t for _, t in rates.values()) == 12
    path = tmp_path / "m.csv"
    explain.write_mutation_csv(path, a)
    assert path.read_text().splitlines()[0].startswith("cluster,")


def test_csv_and_text_formatting(tmp_path):
    v = np.zeros((4, 2, 2))
    v[:2, :, 0] = 1
    v[2:, :, 1] = 1
    table = explain.presence_table(dataset(v), [0, 0, 1, 1], top_n=1)
    path = tmp_path / "p.csv"
    explain.write_table_csv(path, table)
    assert path.read_text().splitlines() == [
        "cluster,rank,object_name,presence_pct,other_pct,f1",
        f"0,1,o0,1.0,0.0,{2 / 3!r}", f"1,1,o1,1.0,0.0,{2 / 3!r}"]
    text = explain.format_table(table)
    assert "Presence %" in text and "o1" in text
