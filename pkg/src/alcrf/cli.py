"""Command-line entry point: stats, train, simulate, serve, report."""

from __future__ import annotations

import json
import os
import sys

import click

from . import corpus, crf, features, loop, metrics

EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _read_dataset(path: str, repair: bool = False) -> corpus.Dataset:
    if not os.path.exists(path):
        raise click.exceptions.UsageError(f"dataset file not found: {path}")
    with open(path, encoding="utf-8") as f:
        text = f.read()
    return corpus.parse_conll(text, repair=repair)


def _load_json(path: str) -> dict:
    if not os.path.exists(path):
        raise click.exceptions.UsageError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _dataset_from_config(cfg: dict) -> corpus.Dataset:
    if "dataset" in cfg:
        return _read_dataset(cfg["dataset"], repair=cfg.get("repair", False))
    if "synthetic" in cfg:
        syn = corpus.SyntheticConfig.from_dict(cfg["synthetic"])
        return corpus.generate_synthetic(syn, seed=cfg.get("synthetic_seed", 0))
    raise click.exceptions.UsageError("config needs a 'dataset' path or a 'synthetic' block")


@click.group()
def main():
    """Active-learning workbench for BIO sequence labeling."""


@main.command()
@click.argument("dataset", type=str)
@click.option("--format", "fmt", type=click.Choice(["table", "json"]), default="table")
@click.option("--json-out", type=str, default=None, help="Also write stats as JSON.")
@click.option("--repair", is_flag=True, help="Repair orphan I-X tags on ingestion.")
def stats(dataset, fmt, json_out, repair):
    """Print corpus statistics for a CoNLL-style file."""
    d = _read_dataset(dataset, repair=repair)
    st = corpus.dataset_stats(d).as_dict()
    if fmt == "json":
        click.echo(json.dumps(st, indent=2, sort_keys=True))
    else:
        width = max(len(k) for k in st)
        for k, v in st.items():
            shown = f"{v:.4f}" if isinstance(v, float) else str(v)
            click.echo(f"{k:<{width}}  {shown}")
    if json_out:
        with open(json_out, "w", encoding="utf-8") as f:
            json.dump(st, f, indent=2, sort_keys=True)


@main.command()
@click.argument("dataset", type=str)
@click.option("--out", required=True, type=str, help="Output model path (.npz).")
@click.option("--sigma", type=float, default=10.0, show_default=True)
@click.option("--max-iter", type=int, default=150, show_default=True)
@click.option("--repair", is_flag=True)
def train(dataset, out, sigma, max_iter, repair):
    """Fit a CRF on a fully labeled file and save the model."""
    d = _read_dataset(dataset, repair=repair)
    idx = features.build_feature_index(d)
    labels = d.labels()
    label_of = {t: i for i, t in enumerate(labels)}
    batch = []
    for s in d.sentences:
        fs = features.featurize_sentence(s.tokens, s.id, idx)
        batch.append((fs, [label_of[t] for t in s.tags]))
    init = crf.CrfModel.zeros(len(idx), labels, sigma)
    try:
        model = crf.train(init, batch, crf.TrainConfig(max_iter=max_iter))
    except crf.TrainingDiverged as e:
        click.echo(f"training diverged: {e}", err=True)
        sys.exit(EXIT_RUNTIME)
    model.save(out)
    idx.save(out + ".features.tsv")
    value, _ = crf.log_likelihood_and_gradient(model, batch)
    click.echo(f"saved {out} (penalized log-likelihood {value:.4f})")


@main.command()
@click.option("--config", "config_path", required=True, type=str)
@click.option("--out", required=True, type=str, help="Output directory.")
@click.option("--resume", is_flag=True, help="Resume from iteration snapshots.")
def simulate(config_path, out, resume):
    """Run the simulated AL experiment matrix from a JSON config."""
    cfg = _load_json(config_path)
    d = _dataset_from_config(cfg)
    strategy_names = cfg.get("strategies", ["RAND", "LC", "NLC", "MTP", "LTP"])
    base = dict(cfg.get("experiment", {}))
    os.makedirs(out, exist_ok=True)
    overall = metrics.distribution_snapshot(list(d.sentences), d.schema)
    combined = ["strategy,iteration,token_f1_mean,entity_f1_mean,sentence_accuracy_mean,offset_mean"]
    try:
        for name in strategy_names:
            ecfg = loop.ExperimentConfig.from_dict({**base, "strategy": name})
            log = loop.run_experiment(d, ecfg, out_dir=out, resume=resume)
            log.write(out, name)
            csv_text, summary = metrics.learning_curve_report(
                {k: [r.to_dict() for r in v] for k, v in log.runs.items()},
                d.schema,
                overall,
            )
            with open(os.path.join(out, f"{name}_curve.csv"), "w", encoding="utf-8") as f:
                f.write(csv_text)
            for entry in summary["iterations"]:
                combined.append(
                    f"{name},{entry['iteration']},{entry['token_f1_mean']!r},"
                    f"{entry['entity_f1_mean']!r},{entry['sentence_accuracy_mean']!r},"
                    + ("" if entry["offset_mean"] is None else repr(entry["offset_mean"]))
                )
            click.echo(f"{name}: done ({ecfg.n_seeds} seeds x {ecfg.n_iterations} iterations)")
    except (loop.LoopError, corpus.CorpusError) as e:
        click.echo(str(e), err=True)
        sys.exit(EXIT_USAGE)
    with open(os.path.join(out, "comparison.csv"), "w", encoding="utf-8") as f:
        f.write("\n".join(combined) + "\n")
    click.echo(f"wrote {os.path.join(out, 'comparison.csv')}")


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=str)
@click.option("--out", required=True, type=str, help="Session state directory.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8137, show_default=True, type=int)
@click.option("--repair", is_flag=True)
def serve(dataset_path, out, host, port, repair):
    """Start the HTTP annotation service."""
    import socket

    import uvicorn

    from .service import create_app

    d = _read_dataset(dataset_path, repair=repair)
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.bind((host, port))
    except OSError:
        click.echo(f"port {port} is not available on {host}", err=True)
        sys.exit(EXIT_USAGE)
    finally:
        probe.close()
    app = create_app(d, out)
    uvicorn.run(app, host=host, port=port, log_level="warning")


@main.command()
@click.option("--runs", "runs_dir", required=True, type=str,
              help="Directory containing <strategy>_runs.json files.")
@click.option("--out", type=str, default=None, help="Write the comparison CSV here.")
def report(runs_dir, out):
    """Render learning-curve comparison tables from experiment logs."""
    if not os.path.isdir(runs_dir):
        raise click.exceptions.UsageError(f"not a directory: {runs_dir}")
    rows = ["strategy,iteration,token_f1_mean,token_f1_std,entity_f1_mean,"
            "sentence_accuracy_mean,sentence_accuracy_std,cumulative_tokens_mean,"
            "cumulative_entities_mean,offset_mean"]
    found = False
    for fname in sorted(os.listdir(runs_dir)):
        if not fname.endswith("_runs.json"):
            continue
        found = True
        name = fname[: -len("_runs.json")]
        payload = _load_json(os.path.join(runs_dir, fname))
        runs = {int(k): v for k, v in payload["runs"].items()}
        _, summary = metrics.learning_curve_report(runs, payload["schema"])
        for e in summary["iterations"]:
            def fmt(x):
                return "" if x is None else repr(x)
            rows.append(
                f"{name},{e['iteration']},{fmt(e['token_f1_mean'])},"
                f"{fmt(e['token_f1_std'])},{fmt(e['entity_f1_mean'])},"
                f"{fmt(e['sentence_accuracy_mean'])},{fmt(e['sentence_accuracy_std'])},"
                f"{fmt(e['cumulative_tokens_mean'])},{fmt(e['cumulative_entities_mean'])},"
                f"{fmt(e['offset_mean'])}"
            )
    if not found:
        raise click.exceptions.UsageError(f"no *_runs.json files under {runs_dir}")
    text = "\n".join(rows) + "\n"
    if out:
        with open(out, "w", encoding="utf-8") as f:
            f.write(text)
    click.echo(text, nl=False)


def entry() -> None:
    try:
        main(standalone_mode=True)
    except Exception as e:  # pragma: no cover - click handles most paths
        click.echo(str(e), err=True)
        sys.exit(EXIT_RUNTIME)


if __name__ == "__main__":
    main()
