import numpy as np
import pytest

from crashprint import pipeline, synthetic


@pytest.fixture(scope="session")
def small_spec():
    return synthetic.SyntheticSpec(archetypes=3, sessions_per_archetype=20, metrics=16, t=12,
                                   common=4, seed=1)


@pytest.fixture(scope="session")
def small_trained(small_spec):
    """A quick VAE+DEC run on a tiny synthetic corpus, calibrated on a second draw."""
    cfg = pipeline.PipelineConfig(t=12, epochs=40, batch=16, z_len=6, dec_k=6, dec_iters=60,
                                  dec_update_interval=20, k_min=2, k_max=5, restarts=3, seed=0)
    traces, truth = synthetic.generate(small_spec)
    ds = pipeline.preprocess(traces, cfg)
    bundle = pipeline.train(ds, cfg)
    vtraces, vtruth = synthetic.generate(synthetic.SyntheticSpec(**{**small_spec.to_json(), "seed": 2}))
    vds = pipeline.preprocess(vtraces, cfg, ds.vocabulary, "validation")
    bundle, vlabels = pipeline.calibrate(bundle, vds)
    return {
        "config": cfg,
        "bundle": bundle,
        "model": bundle.model,
        "train": ds,
        "train_traces": traces,
        "train_labels": [truth[s] for s in ds.session_ids],
        "validation": vds,
        "validation_traces": vtraces,
        "validation_truth": [vtruth[s] for s in vds.session_ids],
        "validation_labels": np.asarray(vlabels),
    }


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def criterion():
    """Record (and print) one PASS/FAIL line per acceptance criterion."""
    def record(cid, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {cid}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
