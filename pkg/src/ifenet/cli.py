"""Command-line surface: synth, prep, train, rank, eval-ranking, sweep-r,
tune. Every command takes one top-level --seed that derives all sub-seeds,
so identical invocations produce byte-identical data files; figures are
rendered next to the delimited outputs.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__, data, ife, metrics, model, report
from . import train as train_mod
from .seeding import derive_seed
from .tape import TapeError

log = logging.getLogger("ifenet")

SPLIT_FILES = {"train": "train.csv", "val": "val.csv", "test": "test.csv"}


class CliError(click.ClickException):
    pass


def _fail_on(*exc_types):
    """Decorator: surface domain errors as clean nonzero exits."""
    def wrap(fn):
        import functools

        @functools.wraps(fn)
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except exc_types as exc:
                raise CliError(str(exc)) from exc
        return inner
    return wrap


def _emit_json_table(out_path: Path, header, rows):
    report.write_json(out_path, {"columns": list(header),
                                 "rows": [list(r) for r in rows]})


def _parse_split(text: str) -> tuple[float, float, float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 3:
        raise CliError(f"--split needs three comma-separated values, got {text!r}")
    return tuple(parts)


def _write_splits(out: Path, splits, num_classes: int):
    out.mkdir(parents=True, exist_ok=True)
    for name, ds in zip(SPLIT_FILES, splits):
        data.write_encoded_csv(ds, out / SPLIT_FILES[name])
    summary = {
        "num_classes": num_classes,
        "d": splits[0].d,
        "feature_names": splits[0].feature_names,
        "sizes": {name: ds.n for name, ds in zip(SPLIT_FILES, splits)},
        "version": __version__,
    }
    report.write_json(out / "summary.json", summary)
    return summary


def _load_splits(data_dir: Path):
    summary_path = data_dir / "summary.json"
    if not summary_path.exists():
        raise CliError(f"{data_dir} is not a prepped data directory "
                       f"(missing summary.json)")
    summary = json.loads(summary_path.read_text())
    c = summary["num_classes"]
    return tuple(data.read_encoded_csv(data_dir / SPLIT_FILES[name], c)
                 for name in SPLIT_FILES), summary


def _train_config(seed, lr, batch_size, hidden, r, epochs, patience):
    return train_mod.TrainConfig(learning_rate=lr, batch_size=batch_size,
                                 max_epochs=epochs, patience=patience,
                                 seed=seed, r=r, hidden_size=hidden)


def _config_dict(cfg: train_mod.TrainConfig) -> dict:
    return dataclasses.asdict(cfg)


@click.group()
@click.version_option(__version__)
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def main(verbose):
    logging.basicConfig(stream=sys.stderr,
                        level=logging.INFO if verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")


@main.command()
@click.option("--n", default=1000, show_default=True)
@click.option("--d", default=10, show_default=True)
@click.option("--k", default=3, show_default=True,
              help="Number of informative features.")
@click.option("--noise", default=0.1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--split", default="0.8,0.1,0.1", show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@_fail_on(data.DataError)
def synth(n, d, k, noise, seed, split, out):
    """Generate a synthetic dataset with planted feature-importance truth."""
    ds = data.synth_dataset(n, d, k, noise, seed)
    spec = data.SplitSpec(*_parse_split(split), seed=seed)
    splits = data.split(ds, spec)
    _write_splits(out, splits, ds.num_classes)
    report.write_truth(out / "truth.txt", ds.truth_groups, ds.feature_names)
    click.echo(f"wrote synthetic splits ({ds.n} rows, d={ds.d}) to {out}")


@main.command()
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--label-col", required=True)
@click.option("--split", default="0.8,0.1,0.1", show_default=True,
              help="Fractions, or absolute counts when all values > 1.")
@click.option("--seed", default=0, show_default=True)
@click.option("--delimiter", default=",", show_default=True)
@click.option("--no-stratify", is_flag=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@_fail_on(data.DataError)
def prep(data_path, label_col, split, seed, delimiter, no_stratify, out):
    """Clean a raw CSV, one-hot encode it, and write train/val/test splits."""
    table = data.drop_missing(data.load_csv(data_path, label_col,
                                            delimiter=delimiter))
    spec = data.fit_encoder(table)
    ds = data.apply_encoder(spec, table)
    split_spec = data.SplitSpec(*_parse_split(split), seed=seed,
                                stratify=not no_stratify)
    splits = data.split(ds, split_spec)
    summary = _write_splits(Path(out), splits, ds.num_classes)
    report.atomic_write_text(Path(out) / "encoder.json", spec.to_json() + "\n")
    click.echo(f"encoded {ds.n} rows into d={ds.d} features, "
               f"C={ds.num_classes} classes; splits "
               f"{tuple(summary['sizes'].values())} -> {out}")


def _metrics_for(params, ds) -> dict:
    preds, _ = model.predict(params, ds.X)
    cm = metrics.confusion(preds, ds.y, ds.num_classes)
    return metrics.classification_metrics(cm).as_dict()


@main.command(name="train")
@click.option("--data", "data_dir", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--seed", default=0, show_default=True)
@click.option("--lr", default=0.01, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--hidden", default=None, type=int,
              help="Hidden layer size; defaults to d.")
@click.option("--r", default=3.0, show_default=True)
@click.option("--epochs", default=train_mod.DEFAULT_MAX_EPOCHS, show_default=True)
@click.option("--patience", default=train_mod.DEFAULT_PATIENCE, show_default=True)
@click.option("--ablation", is_flag=True,
              help="Train the plain FNN baseline (no importance module).")
@click.option("--oracle-repeats", default=3, show_default=True,
              help="Permutation-importance repeats for the report; 0 disables.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="csv", show_default=True,
              help="json additionally emits the tables as structured documents.")
@_fail_on(data.DataError, TapeError, model.CheckpointError)
def cmd_train(data_dir, out, seed, lr, batch_size, hidden, r, epochs, patience,
              ablation, oracle_repeats, fmt):
    """Train IFENet (or the FNN baseline) on prepped splits."""
    (train_ds, val_ds, test_ds), summary = _load_splits(data_dir)
    cfg = _train_config(seed, lr, batch_size, hidden, r, epochs, patience)
    started = time.monotonic()
    params, history = train_mod.fit(train_ds, val_ds, cfg, ablation=ablation)
    log.info("training took %.1fs (%d epochs, stop: %s)",
             time.monotonic() - started, len(history.records),
             history.stop_reason)

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    encoder_ref = str(data_dir / "encoder.json") \
        if (data_dir / "encoder.json").exists() else None
    model.save(params, out / "checkpoint.json", encoder_ref=encoder_ref)
    report.write_history(out / "history.csv", history)
    report.render_history_figure(out / "history.png", history)

    run_report = {
        "version": __version__,
        "seed": seed,
        "config": _config_dict(cfg),
        "ablation": ablation,
        "dataset": {"d": summary["d"], "num_classes": summary["num_classes"],
                    "sizes": summary["sizes"]},
        "best_epoch": history.best_epoch,
        "stop_reason": history.stop_reason,
        "metrics": {"validation": _metrics_for(params, val_ds),
                    "test": _metrics_for(params, test_ds)},
    }
    if not ablation:
        s_rows = model.importance_rows(params, train_ds.X)
        order, scores = ife.global_ranking(s_rows, train_ds.feature_names)
        report.write_ranking(out / "ranking.csv", order, scores,
                             train_ds.feature_names)
        if fmt == "json":
            _emit_json_table(out / "ranking.json", ("rank", "feature", "score"),
                             [(i + 1, train_ds.feature_names[f], scores[f])
                              for i, f in enumerate(order)])
        run_report["ranking"] = [
            {"rank": i + 1, "feature": train_ds.feature_names[f],
             "score": scores[f]} for i, f in enumerate(order)]
        if oracle_repeats > 0:
            oracle_order, _ = metrics.permutation_importance(
                lambda X: model.predict(params, X)[0], test_ds.X, test_ds.y,
                repeats=oracle_repeats, seed=derive_seed(seed, "oracle"))
            grades = metrics.grades_from_ranking([[f] for f in oracle_order],
                                                 test_ds.d)
            ks = list(range(1, test_ds.d + 1))
            ndcg = [metrics.ndcg_at_k(order, grades, k) for k in ks]
            report.write_delimited(out / "ndcg_vs_oracle.csv", ("K", "ndcg"),
                                   [(k, report.format_float(v))
                                    for k, v in zip(ks, ndcg)])
            report.render_ndcg_figure(out / "ndcg_vs_oracle.png", ks, ndcg)
            run_report["ndcg_vs_oracle"] = dict(zip(map(str, ks), ndcg))
    report.write_json(out / "report.json", run_report)
    test_acc = run_report["metrics"]["test"]["accuracy"]
    click.echo(f"test accuracy {test_acc:.4f} "
               f"(best epoch {history.best_epoch}, {history.stop_reason}); "
               f"artifacts in {out}")


@main.command()
@click.option("--checkpoint", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--data", "data_file", required=True,
              type=click.Path(exists=True, path_type=Path),
              help="An encoded split CSV (as written by prep/synth).")
@click.option("--num-classes", default=None, type=int,
              help="Defaults to the checkpoint's class count.")
@click.option("--per-instance", is_flag=True,
              help="Also write the per-instance importance matrix.")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@_fail_on(data.DataError, model.CheckpointError, TapeError)
def rank(checkpoint, data_file, num_classes, per_instance, out):
    """Emit the global feature ranking of a trained model on a split."""
    params = model.load(checkpoint)
    c = num_classes or params.num_classes
    ds = data.read_encoded_csv(data_file, c)
    if ds.d != params.d:
        raise CliError(f"data has d={ds.d} but checkpoint expects d={params.d}")
    s_rows = model.importance_rows(params, ds.X)
    order, scores = ife.global_ranking(s_rows, ds.feature_names)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_ranking(out / "ranking.csv", order, scores, ds.feature_names)
    if per_instance:
        report.write_delimited(
            out / "importance_per_instance.csv", ds.feature_names,
            [[report.format_float(v) for v in row] for row in s_rows])
    click.echo(f"wrote ranking of {ds.d} features to {out}")


@main.command(name="eval-ranking")
@click.option("--ranking", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--truth", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--k-list", default=None,
              help="Comma-separated K values; defaults to 1..d.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]),
              default="csv", show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@_fail_on(metrics.MetricsError, ValueError)
def eval_ranking(ranking, truth, k_list, out, fmt):
    """NDCG@K of a ranking file against a ground-truth file."""
    predicted_names = report.read_ranking(ranking)
    truth_groups_names = report.read_truth(truth)
    truth_names = [n for g in truth_groups_names for n in g]
    if sorted(predicted_names) != sorted(truth_names):
        raise CliError("ranking and truth cover different feature sets")
    index = {name: i for i, name in enumerate(sorted(truth_names))}
    order = [index[n] for n in predicted_names]
    groups = [[index[n] for n in g] for g in truth_groups_names]
    d = len(order)
    grades = metrics.grades_from_ranking(groups, d)
    ks = ([int(k) for k in k_list.split(",")] if k_list
          else list(range(1, d + 1)))
    values = [metrics.ndcg_at_k(order, grades, k) for k in ks]
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_delimited(out / "ndcg.csv", ("K", "ndcg"),
                           [(k, report.format_float(v))
                            for k, v in zip(ks, values)])
    if fmt == "json":
        _emit_json_table(out / "ndcg.json", ("K", "ndcg"), list(zip(ks, values)))
    report.render_ndcg_figure(out / "ndcg.png", ks, values)
    for k, v in zip(ks, values):
        click.echo(f"NDCG@{k} = {v:.4f}")


@main.command(name="sweep-r")
@click.option("--data", "data_dir", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--r-list", default="1,2,3,4,5,6,7,8", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--lr", default=0.01, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--hidden", default=None, type=int)
@click.option("--epochs", default=train_mod.DEFAULT_MAX_EPOCHS, show_default=True)
@click.option("--patience", default=train_mod.DEFAULT_PATIENCE, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@_fail_on(data.DataError, TapeError)
def sweep_r(data_dir, r_list, seed, lr, batch_size, hidden, epochs, patience,
            out):
    """Train one model per amplification coefficient and tabulate accuracy."""
    (train_ds, val_ds, test_ds), _ = _load_splits(data_dir)
    r_values = [float(v) for v in r_list.split(",")]
    cfg = _train_config(seed, lr, batch_size, hidden, r_values[0], epochs,
                        patience)
    results = train_mod.sweep_r(r_values, cfg, train_ds, val_ds, test_ds)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_delimited(out / "sweep.csv", ("r", "test_accuracy"),
                           [(report.format_float(r), report.format_float(a))
                            for r, a in results])
    report.render_sweep_figure(out / "sweep.png", [r for r, _ in results],
                               [a for _, a in results])
    for r, acc in results:
        click.echo(f"r={r:g}: test accuracy {acc:.4f}")


@main.command()
@click.option("--data", "data_dir", required=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--trials", default=train_mod.DEFAULT_TRIALS, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--epochs", default=train_mod.DEFAULT_MAX_EPOCHS, show_default=True)
@click.option("--patience", default=train_mod.DEFAULT_PATIENCE, show_default=True)
@click.option("--ablation", is_flag=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@_fail_on(data.DataError, TapeError)
def tune(data_dir, trials, seed, epochs, patience, ablation, out):
    """Random search over the standard hyperparameter space."""
    (train_ds, val_ds, test_ds), _ = _load_splits(data_dir)
    base = train_mod.TrainConfig(max_epochs=epochs, patience=patience,
                                 seed=seed)
    best_cfg, best_params, records = train_mod.random_search(
        train_mod.DEFAULT_SEARCH_SPACE, trials, base, train_ds, val_ds, seed,
        ablation=ablation)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_delimited(
        out / "trials.csv",
        ("trial", "learning_rate", "batch_size", "hidden_size", "r",
         "val_accuracy"),
        [(rec.index, report.format_float(rec.config.learning_rate),
          rec.config.batch_size, rec.config.hidden_size,
          report.format_float(rec.config.r),
          report.format_float(rec.val_accuracy)) for rec in records])
    model.save(best_params, out / "checkpoint.json")
    test_acc = train_mod.accuracy_on(best_params, test_ds)
    report.write_json(out / "best_config.json",
                      {"config": _config_dict(best_cfg),
                       "val_accuracy": max(r.val_accuracy for r in records),
                       "test_accuracy": test_acc})
    click.echo(f"best trial: val accuracy "
               f"{max(r.val_accuracy for r in records):.4f}, "
               f"test accuracy {test_acc:.4f}; artifacts in {out}")


if __name__ == "__main__":
    main()
