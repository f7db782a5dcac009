"""Command line entry point: ``crashprint <verb> ...``.

Exit codes: 0 ok, 2 invalid input, 3 invalid state, 4 training diverged.
"""

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import explain as explain_mod
from . import ingest, pipeline, store, synthetic
from .cluster import write_metric_curve
from .embed import embed
from .emerging import write_verdicts
from .errors import CrashprintError, InvalidInputError
from .tsne import tsne, write_projection

log = logging.getLogger("crashprint")


def _parse_k_range(value):
    if value is None:
        return None
    try:
        if ":" in value:
            lo, hi = (int(v) for v in value.split(":"))
        elif "-" in value:
            lo, hi = (int(v) for v in value.split("-"))
        else:
            lo = hi = int(value)
    except ValueError:
        raise InvalidInputError(f"bad --k-range {value!r}; expected LO:HI") from None
    if lo > hi:
        raise InvalidInputError("--k-range low end exceeds high end")
    return range(lo, hi + 1)


def _config(config_path, **overrides):
    cfg = pipeline.PipelineConfig.load(config_path) if config_path else pipeline.PipelineConfig()
    return cfg.override(**overrides)


def _is_container(path):
    with open(path, "rb") as fh:
        return fh.read(8) == store.MAGIC


def _load_input(path, bundle, split="production"):
    if _is_container(path):
        ds = ingest.load_dataset(path)
        bundle.check_dataset(ds)
        return ds
    return pipeline.as_dataset(bundle, ingest.read_traces(path), split)


def _write_labels(out, session_ids, labels):
    text = "".join(json.dumps({"session_id": s, "cluster": int(c)}, sort_keys=True) + "\n"
                   for s, c in zip(session_ids, labels))
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)


def _read_labels(path, session_ids):
    mapping = {}
    with open(path) as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                mapping[obj["session_id"]] = int(obj["cluster"])
    missing = [s for s in session_ids if s not in mapping]
    if missing:
        raise InvalidInputError(f"{len(missing)} sessions have no label (e.g. {missing[0]!r})")
    return np.array([mapping[s] for s in session_ids])


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Fingerprint, cluster, explain and monitor crash sessions."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command("gen-synthetic")
@click.option("--archetypes", default=4, show_default=True)
@click.option("--sessions", "sessions", default=100, show_default=True,
              help="Sessions per archetype.")
@click.option("--metrics", default=40, show_default=True)
@click.option("--t", "t", default=50, show_default=True, help="Crash-aligned pattern horizon.")
@click.option("--noise", default=0.05, show_default=True)
@click.option("--sparsity", default=0.08, show_default=True)
@click.option("--only", default=None, help="Comma-separated archetype indices to emit.")
@click.option("--seed", default=0, show_default=True)
@click.option("--layout-seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--labels-out", type=click.Path(dir_okay=False))
def gen_synthetic(archetypes, sessions, metrics, t, noise, sparsity, only, seed, layout_seed,
                  out, labels_out):
    """Write synthetic traces (JSON-lines) with ground-truth archetype labels."""
    spec = synthetic.SyntheticSpec(archetypes=archetypes, sessions_per_archetype=sessions,
                                   metrics=metrics, t=t, noise=noise, sparsity=sparsity,
                                   seed=seed, layout_seed=layout_seed)
    chosen = None if only is None else [int(a) for a in only.split(",")]
    traces, labels = synthetic.generate(spec, chosen)
    ingest.write_traces(out, traces)
    if labels_out:
        _write_labels(labels_out, [tr.session_id for tr in traces],
                      [labels[tr.session_id] for tr in traces])
    click.echo(f"wrote {len(traces)} traces to {out}", err=True)


@cli.command()
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--t", "t", type=int)
@click.option("--presence-threshold", type=float)
@click.option("--vocab-from", type=click.Path(exists=True, dir_okay=False),
              help="Reuse the vocabulary of a tensor bundle or model bundle.")
@click.option("--split", type=click.Choice(ingest.SPLITS), default="train", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def preprocess(input_path, config_path, t, presence_threshold, vocab_from, split, out):
    """Homogenize JSON-lines traces into a tensor bundle."""
    vocab = None
    if vocab_from:
        header, _ = store.load(vocab_from)
        vocab = ingest.MetricVocabulary.from_json(header["vocabulary"])
        if t is None and "preprocessing" in header:
            t = header["preprocessing"]["t"]
        elif t is None:
            t = header.get("t")
    cfg = _config(config_path, t=t, presence_threshold=presence_threshold)
    traces = ingest.read_traces(input_path)
    ds = pipeline.preprocess(traces, cfg, vocab, split)
    ingest.save_dataset(out, ds)
    click.echo(f"{len(ds)} sessions -> {out} (t={ds.t}, m={ds.m}, vocabulary {ds.vocabulary.hash})",
               err=True)


@cli.command()
@click.argument("tensors", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int)
@click.option("--variant", type=click.Choice(["AE", "VAE"]))
@click.option("--dec/--no-dec", "dec_enabled", default=None)
@click.option("--epochs", type=int)
@click.option("--batch", type=int)
@click.option("--lr", type=float)
@click.option("--z-len", type=int)
@click.option("--dec-k", type=int)
@click.option("--dec-iters", type=int)
@click.option("--app-version")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def train(tensors, config_path, seed, variant, dec_enabled, epochs, batch, lr, z_len, dec_k,
          dec_iters, app_version, out):
    """Train the embedding model (and DEC refinement) on a tensor bundle."""
    ds = ingest.load_dataset(tensors)
    cfg = _config(config_path, seed=seed, variant=variant, dec_enabled=dec_enabled, epochs=epochs,
                  batch=batch, lr=lr, z_len=z_len, dec_k=dec_k, dec_iters=dec_iters,
                  app_version=app_version, t=ds.t)
    bundle = pipeline.train(ds, cfg)
    bundle.save(out)
    click.echo(f"trained {cfg.variant}{'+DEC' if cfg.dec_enabled else ''} "
               f"(z_len={bundle.model.z_len}) -> {out}", err=True)


@cli.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.argument("tensors", type=click.Path(exists=True, dir_okay=False))
@click.option("--k-range", help="Inclusive LO:HI range of k for the elbow search.")
@click.option("--percentile", type=float, help="Novelty threshold percentile (fraction).")
@click.option("--curve-out", type=click.Path(dir_okay=False), help="Elbow metrics CSV.")
@click.option("--labels-out", type=click.Path(dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def calibrate(model, tensors, k_range, percentile, curve_out, labels_out, out):
    """Choose k' on validation tensors and store centroids plus novelty threshold."""
    bundle = pipeline.ModelBundle.load(model)
    ks = _parse_k_range(k_range)
    changes = {"percentile": percentile}
    if ks is not None:
        changes.update(k_min=ks.start, k_max=ks.stop - 1)
    bundle.config = bundle.config.override(**changes)
    ds = _load_input(tensors, bundle, "validation")
    bundle, labels = pipeline.calibrate(bundle, ds)
    bundle.save(out)
    if curve_out:
        write_metric_curve(curve_out, bundle.elbow_curve)
    if labels_out:
        _write_labels(labels_out, ds.session_ids, labels)
    cm = bundle.cluster_model
    click.echo(f"k'={cm.k_prime} threshold={cm.threshold:.6g} -> {out}", err=True)


@cli.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="Labels JSON-lines (default stdout).")
def assign(model, input_path, out):
    """Label each session with its nearest calibrated cluster."""
    bundle = pipeline.ModelBundle.load(model)
    bundle.require_calibrated()
    ds = _load_input(input_path, bundle)
    _, labels = pipeline.assign(bundle, ds)
    _write_labels(out, ds.session_ids, labels)


@cli.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False), help="Verdicts JSON-lines (default stdout).")
def detect(model, input_path, out):
    """Flag sessions far from every calibrated cluster (possible new crash types)."""
    bundle = pipeline.ModelBundle.load(model)
    bundle.require_calibrated()
    ds = _load_input(input_path, bundle)
    verdicts = pipeline.detect(bundle, ds)
    write_verdicts(out or sys.stdout, verdicts)
    flagged = sum(v.flagged for v in verdicts)
    click.echo(f"{flagged}/{len(verdicts)} flagged", err=True)


@cli.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.argument("input_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", "labels_path", type=click.Path(exists=True, dir_okay=False),
              help="Labels JSON-lines; assigned with the model when omitted.")
@click.option("--top-n", default=explain_mod.DEFAULT_TOP_N, show_default=True)
@click.option("--absence", is_flag=True, help="Also emit the lack-of-presence table.")
@click.option("--average", is_flag=True, help="Also emit the average-value table.")
@click.option("--mutation", is_flag=True, help="Also run mutation tests.")
@click.option("--min-presence", default=explain_mod.DEFAULT_MIN_PRESENCE, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), help="Directory for CSV outputs.")
def explain(model, input_path, labels_path, top_n, absence, average, mutation, min_presence, out):
    """Per-cluster object rankings (presence table by default)."""
    bundle = pipeline.ModelBundle.load(model)
    bundle.require_calibrated()
    ds = _load_input(input_path, bundle)
    if labels_path:
        labels = _read_labels(labels_path, ds.session_ids)
    else:
        _, labels = pipeline.assign(bundle, ds)
    outdir = Path(out) if out else None
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)
    table = explain_mod.presence_table(ds, labels, top_n)
    click.echo(explain_mod.format_table(table))
    if outdir:
        explain_mod.write_table_csv(outdir / "presence.csv", table)
    if absence:
        t_abs = explain_mod.absence_table(ds, labels, top_n)
        click.echo("\n" + explain_mod.format_table(t_abs))
        if outdir:
            explain_mod.write_table_csv(outdir / "absence.csv", t_abs)
    if average:
        t_avg = explain_mod.average_value_table(ds, labels, min_presence, top_n)
        for c in sorted(t_avg):
            for r in t_avg[c]:
                click.echo(f"cluster {c} #{r.rank} {r.object_name}: in={r.mean_in:.4g} "
                           f"other={r.mean_other:.4g} ratio={r.ratio:.3f}")
        if outdir:
            explain_mod.write_average_csv(outdir / "average.csv", t_avg)
    if mutation:
        report = explain_mod.mutation_test(bundle.model, bundle.cluster_model, ds, labels)
        click.echo(f"\nmutation change rate: zero-out {report.change_rate('zero-out'):.3f}, "
                   f"fill-average {report.change_rate('fill-average'):.3f}")
        if outdir:
            explain_mod.write_mutation_csv(outdir / "mutation.csv", report)


@cli.command()
@click.argument("model", type=click.Path(exists=True, dir_okay=False))
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--tag", "tags", multiple=True,
              help="Tag for each input, in order (e.g. validation, regression, later).")
@click.option("--perplexity", default=30.0, show_default=True)
@click.option("--iters", default=1000, show_default=True)
@click.option("--seed", type=int)
@click.option("--out", type=click.Path(dir_okay=False), help="CSV path (default stdout).")
def viz(model, inputs, tags, perplexity, iters, seed, out):
    """Project embeddings to 2-D with t-SNE and export session_id,x,y,cluster_label,tag."""
    bundle = pipeline.ModelBundle.load(model)
    bundle.require_calibrated()
    if tags and len(tags) != len(inputs):
        raise InvalidInputError("give one --tag per input or none")
    ids, zs, all_tags = [], [], []
    for i, path in enumerate(inputs):
        ds = _load_input(path, bundle)
        ids += ds.session_ids
        zs.append(embed(bundle.model, ds))
        all_tags += [tags[i] if tags else Path(path).stem] * len(ds)
    z = np.vstack(zs)
    labels, _ = bundle.cluster_model.assign(z)
    proj = tsne(z, perplexity=perplexity, iters=iters,
                seed=bundle.config.seed if seed is None else seed)
    proj.session_ids, proj.labels, proj.tags = ids, labels, all_tags
    write_projection(out or sys.stdout, proj)


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="crashprint", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 2
    except click.Abort:
        return 1
    except CrashprintError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except FileNotFoundError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
