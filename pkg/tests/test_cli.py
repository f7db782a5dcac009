import csv
import json

import pytest

from crashprint.cli import main


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    common = ["--archetypes", 3, "--metrics", 16, "--t", 12]
    assert run("gen-synthetic", *common, "--sessions", 20, "--seed", 1,
               "--out", d / "train.jsonl", "--labels-out", d / "truth.jsonl") == 0
    assert run("gen-synthetic", *common, "--sessions", 12, "--seed", 2, "--out", d / "val.jsonl") == 0
    assert run("preprocess", d / "train.jsonl", "--t", 12, "--out", d / "train.cpt") == 0
    assert run("preprocess", d / "val.jsonl", "--vocab-from", d / "train.cpt", "--split", "validation",
               "--out", d / "val.cpt") == 0
    (d / "cfg.yaml").write_text("epochs: 20\nbatch: 16\nz_len: 5\ndec_k: 6\ndec_iters: 30\n"
                                "dec_update_interval: 10\nrestarts: 2\n")
    assert run("train", d / "train.cpt", "--config", d / "cfg.yaml", "--seed", 0,
               "--variant", "VAE", "--dec", "--out", d / "model.cpb") == 0
    assert run("calibrate", d / "model.cpb", d / "val.cpt", "--k-range", "2:5", "--percentile", 0.95,
               "--curve-out", d / "elbow.csv", "--labels-out", d / "vlab.jsonl",
               "--out", d / "cal.cpb") == 0
    return d


def test_gen_synthetic_counts(workdir):
    lines = (workdir / "train.jsonl").read_text().splitlines()
    assert len(lines) == 60
    truth = [json.loads(x) for x in (workdir / "truth.jsonl").read_text().splitlines()]
    assert sorted(t["cluster"] for t in truth) == [0] * 20 + [1] * 20 + [2] * 20


def test_preprocess_is_byte_identical(workdir):
    assert run("preprocess", workdir / "train.jsonl", "--t", 12, "--out", workdir / "again.cpt") == 0
    assert (workdir / "again.cpt").read_bytes() == (workdir / "train.cpt").read_bytes()


def test_elbow_csv(workdir):
    rows = list(csv.DictReader(open(workdir / "elbow.csv")))
    assert [int(r["k"]) for r in rows] == [2, 3, 4, 5]
    assert set(rows[0]) == {"k", "silhouette", "calinski_harabasz", "davies_bouldin"}


def test_assign_matches_calibration_labels(workdir, capsys):
    capsys.readouterr()
    assert run("assign", workdir / "cal.cpb", workdir / "val.jsonl") == 0
    out = capsys.readouterr().out
    assert out == (workdir / "vlab.jsonl").read_text()


def test_detect_jsonl(workdir):
    assert run("detect", workdir / "cal.cpb", workdir / "val.cpt", "--out", workdir / "v.jsonl") == 0
    rows = [json.loads(x) for x in (workdir / "v.jsonl").read_text().splitlines()]
    assert len(rows) == 36
    assert set(rows[0]) == {"session_id", "cluster", "distance", "flagged"}
    assert sum(r["flagged"] for r in rows) <= 2


def test_explain_outputs(workdir):
    out = workdir / "ex"
    assert run("explain", workdir / "cal.cpb", workdir / "val.cpt", "--labels", workdir / "vlab.jsonl",
               "--top-n", 2, "--absence", "--average", "--mutation", "--out", out) == 0
    assert sorted(p.name for p in out.iterdir()) == ["absence.csv", "average.csv", "mutation.csv",
                                                     "presence.csv"]
    header = (out / "presence.csv").read_text().splitlines()[0]
    assert header == "cluster,rank,object_name,presence_pct,other_pct,f1"


def test_viz_csv(workdir):
    assert run("viz", workdir / "cal.cpb", workdir / "val.cpt", workdir / "train.cpt",
               "--tag", "validation", "--tag", "train", "--perplexity", 5, "--iters", 60,
               "--out", workdir / "viz.csv") == 0
    rows = list(csv.DictReader(open(workdir / "viz.csv")))
    assert len(rows) == 96
    assert {r["tag"] for r in rows} == {"validation", "train"}


def test_exit_codes(workdir, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    assert run("preprocess", empty, "--out", tmp_path / "x.cpt") == 2
    assert run("assign", workdir / "model.cpb", workdir / "val.jsonl") == 3
    assert run("calibrate", workdir / "model.cpb", workdir / "val.cpt", "--k-range", "5:2",
               "--out", tmp_path / "c.cpb") == 2
    assert run("train", workdir / "train.cpt", "--variant", "GAN", "--out", tmp_path / "m.cpb") == 2
    other = tmp_path / "other.cpt"
    assert run("gen-synthetic", "--archetypes", 2, "--metrics", 12, "--sessions", 4, "--seed", 7,
               "--out", tmp_path / "o.jsonl") == 0
    assert run("preprocess", tmp_path / "o.jsonl", "--t", 12, "--out", other) == 0
    assert run("assign", workdir / "cal.cpb", other) == 2


def test_diverged_exit_code(workdir, tmp_path, monkeypatch):
    from crashprint import pipeline
    from crashprint.errors import TrainingDivergedError

    def boom(dataset, config):
        raise TrainingDivergedError("non-finite loss", 3)

    monkeypatch.setattr(pipeline, "train", boom)
    assert run("train", workdir / "train.cpt", "--epochs", 1, "--out", tmp_path / "m.cpb") == 4
    assert not (tmp_path / "m.cpb").exists()
