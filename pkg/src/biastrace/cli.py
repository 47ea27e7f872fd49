"""Command line interface: corpus -> vocabulary -> co-occurrences -> GloVe ->
bias measurement -> per-document attribution -> validation -> report."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import click
import numpy as np

from biastrace import bias_gradient as bg
from biastrace import cooc as cooc_mod
from biastrace import corpus as corpus_mod
from biastrace import glove as glove_mod
from biastrace import harness as harness_mod
from biastrace import influence as infl_mod
from biastrace import metrics as metrics_mod
from biastrace import plots as plots_mod
from biastrace import ppmi as ppmi_mod


def _load_spec(spec_arg: str) -> metrics_mod.WeatSpec:
    p = Path(spec_arg)
    if p.exists():
        return metrics_mod.load_weat_spec(p)
    return metrics_mod.load_weat_spec(metrics_mod.builtin_spec_path(spec_arg))


def _corpus_options(f):
    f = click.option("--min-len", default=1, show_default=True, help="Minimum document length")(f)
    f = click.option("--max-len", default=10**9, help="Maximum document length")(f)
    f = click.option(
        "--sep", default="blank", type=click.Choice(["blank", "line"]),
        show_default=True, help="Document record separator",
    )(f)
    return f


def _hyper_options(f):
    f = click.option("--dim", default=25, show_default=True)(f)
    f = click.option("--epochs", default=50, show_default=True)(f)
    f = click.option("--lr", default=0.05, show_default=True)(f)
    f = click.option("--alpha", default=0.75, show_default=True)(f)
    f = click.option("--x-max", default=100.0, show_default=True)(f)
    f = click.option("--seed", default=0, show_default=True)(f)
    f = click.option("--window", default=8, show_default=True)(f)
    return f


def _write_json(path, payload, config):
    payload = dict(payload)
    payload["config"] = config
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1)


@click.group()
def main():
    """Trace WEAT bias in GloVe embeddings back to training documents."""


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--min-count", default=1, show_default=True)
@_corpus_options
@click.option("--out", required=True, type=click.Path())
@click.option("--doc-index", type=click.Path(), help="Also write the document byte-span index")
def vocab(corpus_path, min_count, min_len, max_len, sep, out, doc_index):
    """Build a frequency-descending vocabulary from a corpus file."""
    corpus = corpus_mod.load_corpus(corpus_path, min_len, max_len, sep)
    v = corpus_mod.build_vocabulary(corpus, min_count)
    corpus_mod.save_vocabulary(v, out)
    if doc_index:
        corpus_mod.save_doc_index(corpus, doc_index)
    click.echo(f"{len(corpus)} documents, {corpus.n_tokens} tokens, V={len(v)}")


@main.command("cooc")
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--window", default=8, show_default=True)
@_corpus_options
@click.option("--out", required=True, type=click.Path())
def cooc_cmd(corpus_path, vocab_path, window, min_len, max_len, sep, out):
    """Extract the sparse co-occurrence matrix."""
    corpus = corpus_mod.load_corpus(corpus_path, min_len, max_len, sep)
    v = corpus_mod.load_vocabulary(vocab_path)
    X = cooc_mod.extract_cooc(corpus, v, window)
    cooc_mod.save_cooc(X, out)
    click.echo(f"V={X.V}, nnz={X.nnz}, total weight={X.total_weight:.3f}")


@main.command("train")
@click.option("--cooc", "cooc_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@_hyper_options
@click.option("--out", required=True, type=click.Path())
def train_cmd(cooc_path, vocab_path, dim, epochs, lr, alpha, x_max, seed, window, out):
    """Train a GloVe model and save it with its context sidecar."""
    X = cooc_mod.load_cooc(cooc_path)
    v = corpus_mod.load_vocabulary(vocab_path)
    hyper = glove_mod.Hyperparams(dim, alpha, x_max, epochs, lr, seed, window)
    model = glove_mod.train(X, hyper, v.checksum())
    glove_mod.save_embeddings(model, v.words, out)
    click.echo(f"final loss {model.epoch_losses[-1]:.6f} after {epochs} epochs")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--spec", "spec_arg", required=True)
@click.option("--std", default="sample", type=click.Choice(["sample", "population"]))
def weat(model_path, spec_arg, std):
    """Print the WEAT effect size of a saved embedding."""
    model, words = glove_mod.load_embeddings(model_path)
    spec = _load_spec(spec_arg)
    v = corpus_mod.Vocabulary(tuple(words), tuple([1] * len(words)))
    b = metrics_mod.weat_effect_size(model.w, spec.resolve(v), std=std)
    click.echo(f"{spec.name} effect size: {b:.6f}")


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--cooc", "cooc_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--models", multiple=True, type=click.Path(exists=True),
              help="Embedding files (influence method); repeatable")
@click.option("--spec", "spec_arg", required=True)
@click.option("--out", required=True, type=click.Path())
@click.option("--method", default="influence", type=click.Choice(["influence", "ppmi"]))
@click.option("--window", default=8, show_default=True)
@_corpus_options
@click.option("--hist", type=click.Path(), help="Also write a histogram summary CSV")
def scan(corpus_path, cooc_path, vocab_path, models, spec_arg, out, method,
         window, min_len, max_len, sep, hist):
    """Approximate the differential bias of removing each document."""
    corpus = corpus_mod.load_corpus(corpus_path, min_len, max_len, sep)
    v = corpus_mod.load_vocabulary(vocab_path)
    X = cooc_mod.load_cooc(cooc_path)
    spec = _load_spec(spec_arg)
    if method == "influence":
        if not models:
            raise click.UsageError("--models is required for the influence method")
        loaded = [glove_mod.load_embeddings(p, v.checksum())[0] for p in models]
        records = infl_mod.differential_bias_scan(corpus, v, X, loaded, spec, window)
    else:
        records = ppmi_mod.ppmi_diff_scan(corpus, v, X, spec, window)
    infl_mod.save_scan_csv(records, out, method=method)
    if hist:
        infl_mod.save_histogram_csv(records, hist)
    finite = [r.delta_b for r in records if np.isfinite(r.delta_b)]
    click.echo(f"scanned {len(records)} documents; "
               f"delta range [{min(finite):.3e}, {max(finite):.3e}]")


@main.command()
@click.option("--scan", "scan_path", required=True, type=click.Path(exists=True))
@click.option("--sizes", required=True, help="Comma-separated set sizes, e.g. 10,100,1000")
@click.option("--random", "n_random", default=0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path())
def perturb(scan_path, sizes, n_random, seed, out):
    """Build increase/decrease/random perturbation sets from a scan CSV."""
    records = infl_mod.load_scan_csv(scan_path)
    size_list = [int(s) for s in sizes.split(",")]
    sets = harness_mod.make_perturbation_sets(records, size_list, n_random, seed)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    for pset in sets:
        pset.save(outdir / f"{pset.name}.json")
    click.echo(f"wrote {len(sets)} perturbation sets to {outdir}")


@main.command()
@click.option("--corpus", "corpus_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--set", "set_path", required=True, type=click.Path(exists=True))
@click.option("--seeds", default=3, show_default=True, help="Retraining seeds")
@click.option("--spec", "spec_arg", required=True)
@_hyper_options
@_corpus_options
@click.option("--cooc", "cooc_path", type=click.Path(exists=True),
              help="Unperturbed co-occurrence file (enables the influence approximation)")
@click.option("--models", multiple=True, type=click.Path(exists=True),
              help="Baseline embeddings for the influence approximation")
@click.option("--out", required=True, type=click.Path())
def validate(corpus_path, vocab_path, set_path, seeds, spec_arg, dim, epochs, lr,
             alpha, x_max, seed, window, min_len, max_len, sep, cooc_path, models, out):
    """Ground-truth retraining for one perturbation set (optionally with the
    influence approximation of the same set)."""
    corpus = corpus_mod.load_corpus(corpus_path, min_len, max_len, sep)
    v = corpus_mod.load_vocabulary(vocab_path)
    pset = harness_mod.PerturbationSet.load(set_path)
    spec = _load_spec(spec_arg)
    hyper = glove_mod.Hyperparams(dim, alpha, x_max, epochs, lr, seed, window)
    mean, sd, per_seed = harness_mod.ground_truth(
        corpus, pset, v, hyper, seeds, spec, window
    )
    payload = {
        "name": pset.name,
        "kind": pset.kind,
        "doc_ids": list(pset.doc_ids),
        "truth": {"mean": mean, "std": sd, "per_seed": list(per_seed)},
    }
    if cooc_path and models:
        X = cooc_mod.load_cooc(cooc_path)
        loaded = [glove_mod.load_embeddings(p, v.checksum())[0] for p in models]
        resolved = spec.resolve(v)
        base = [metrics_mod.weat_effect_size(m.w, resolved) for m in loaded]
        _, _, per_model = infl_mod.differential_bias_of_set(
            set(pset.doc_ids), corpus, v, X, loaded, spec, window
        )
        approx = [b - d for b, d in zip(base, per_model)]
        payload["baseline"] = {"per_model": base,
                               "mean": float(np.mean(base)),
                               "std": float(np.std(base, ddof=1)) if len(base) > 1 else None}
        payload["approx"] = {"delta_per_model": list(per_model),
                             "bias_per_model": approx,
                             "mean": float(np.mean(approx)),
                             "std": float(np.std(approx, ddof=1)) if len(approx) > 1 else None}
    config = {"hyper": hyper.__dict__, "seeds": seeds, "spec": spec.name,
              "corpus": str(corpus_path), "window": window}
    _write_json(out, payload, config)
    click.echo(f"{pset.name}: ground truth {mean:.4f} +/- {sd:.4f}")


@main.command()
@click.option("--approx", "approx_path", type=click.Path(exists=True),
              help="Per-document scan CSV (for the histogram output)")
@click.option("--truth", "truth_paths", multiple=True, required=True,
              type=click.Path(exists=True), help="validate output JSONs; repeatable")
@click.option("--out", required=True, type=click.Path())
@click.option("--figures/--no-figures", default=True, show_default=True,
              help="Render PNG figures next to the outputs")
def report(approx_path, truth_paths, out, figures):
    """Aggregate validation runs: r-squared, Welch tables, CSVs and figures."""
    entries = []
    for p in truth_paths:
        with open(p, encoding="utf-8") as f:
            entries.append(json.load(f))
    outdir = Path(out).parent
    outdir.mkdir(parents=True, exist_ok=True)

    baseline = None
    for e in entries:
        if "baseline" in e and e["baseline"].get("per_model"):
            baseline = e["baseline"]["per_model"]
            break

    rows = []
    for e in entries:
        row = {
            "name": e["name"], "kind": e["kind"], "size": len(e["doc_ids"]),
            "truth_mean": e["truth"]["mean"], "truth_std": e["truth"]["std"],
            "approx_mean": e.get("approx", {}).get("mean"),
            "approx_std": e.get("approx", {}).get("std"),
            "welch_t": None, "welch_p": None,
        }
        if baseline is not None and len(baseline) >= 2 and len(e["truth"]["per_seed"]) >= 2:
            t, pv = harness_mod.welch_t(e["truth"]["per_seed"], baseline)
            row["welch_t"], row["welch_p"] = t, pv
        rows.append(row)

    paired = [(r["approx_mean"], r["truth_mean"]) for r in rows if r["approx_mean"] is not None]
    r2 = harness_mod.r_squared([a for a, _ in paired], [t for _, t in paired]) if len(paired) >= 2 else None

    table_path = outdir / (Path(out).stem + "_sets.csv")
    with open(table_path, "w", newline="", encoding="utf-8") as f:
        wr = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        wr.writeheader()
        wr.writerows(rows)

    summary = {
        "r_squared": r2,
        "baseline": {"per_model": baseline} if baseline else None,
        "sets": rows,
        "sets_csv": str(table_path),
    }

    if approx_path:
        records = infl_mod.load_scan_csv(approx_path)
        hist_path = outdir / (Path(out).stem + "_histogram.csv")
        infl_mod.save_histogram_csv(records, hist_path)
        summary["histogram_csv"] = str(hist_path)
        if figures:
            fig = outdir / (Path(out).stem + "_histogram.png")
            plots_mod.plot_scan_histogram(
                np.array([r.delta_b for r in records]), fig
            )
            summary["histogram_png"] = str(fig)

    if figures and len(paired) >= 2 and baseline is not None:
        sub = [r for r in rows if r["approx_mean"] is not None]
        scatter = outdir / (Path(out).stem + "_approx_vs_truth.png")
        plots_mod.plot_approx_vs_truth(
            [r["approx_mean"] for r in sub],
            [r["approx_std"] or 0 for r in sub],
            [r["truth_mean"] for r in sub],
            [r["truth_std"] or 0 for r in sub],
            float(np.mean(baseline)),
            scatter,
        )
        perset = outdir / (Path(out).stem + "_sets.png")
        plots_mod.plot_per_set(
            [r["name"] for r in sub],
            [r["approx_mean"] for r in sub],
            [r["approx_std"] or 0 for r in sub],
            [r["truth_mean"] for r in sub],
            [r["truth_std"] or 0 for r in sub],
            float(np.mean(baseline)),
            perset,
        )
        summary["approx_vs_truth_png"] = str(scatter)
        summary["sets_png"] = str(perset)

    _write_json(out, summary, {"truth_files": list(truth_paths), "approx": approx_path})
    click.echo(f"r_squared: {r2}")


@main.command()
@click.option("--cooc", "cooc_path", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--vocab", "vocab_path", required=True, type=click.Path(exists=True))
@click.option("--spec", "spec_arg", required=True)
@click.option("--out", required=True, type=click.Path())
def gradient(cooc_path, model_path, vocab_path, spec_arg, out):
    """Dump the bias gradient over nonzero co-occurrences, largest first."""
    X = cooc_mod.load_cooc(cooc_path)
    v = corpus_mod.load_vocabulary(vocab_path)
    model, _ = glove_mod.load_embeddings(model_path, v.checksum())
    spec = _load_spec(spec_arg)
    grad = bg.bias_gradient(X, model, spec, v)
    bg.save_gradient_csv(grad, out)
    click.echo(f"wrote gradient rows for {len(grad.rows)} WEAT words")


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--questions", required=True, type=click.Path(exists=True))
def analogy(model_path, questions):
    """Top-1 accuracy on a standard `a b c d` analogy file."""
    model, words = glove_mod.load_embeddings(model_path)
    qs = harness_mod.load_analogy_file(questions)
    acc, attempted, skipped = harness_mod.analogy_eval(model, words, qs)
    click.echo(f"top-1 accuracy {acc:.4f} on {attempted} questions ({skipped} skipped)")


if __name__ == "__main__":
    main()
