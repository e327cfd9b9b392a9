"""Report emission: delimited data files (the contract) plus rendered
matplotlib figures alongside them. Data files are written atomically and
contain no timestamps, so reruns with the same seed are byte-identical;
wall-clock timing goes to the log only.
"""

from __future__ import annotations

import csv
import io
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def atomic_write_text(path, text: str):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_delimited(path, header, rows, delimiter: str = ","):
    buf = io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    atomic_write_text(path, buf.getvalue())


def write_json(path, payload: dict):
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def format_float(x: float) -> str:
    """Shortest decimal that round-trips the exact float64 value."""
    return repr(float(x))


# -- ranking / truth files -------------------------------------------------

def write_ranking(path, order, scores, feature_names, delimiter: str = ","):
    rows = [(rank + 1, feature_names[f], format_float(scores[f]))
            for rank, f in enumerate(order)]
    write_delimited(path, ("rank", "feature", "score"), rows, delimiter)


def read_ranking(path, delimiter: str = ","):
    """Returns the ordered feature names."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader)
        if header[:2] != ["rank", "feature"]:
            raise ValueError(f"{path}: not a ranking file")
        return [row[1] for row in reader]


def write_truth(path, tie_groups, feature_names):
    """Tie groups (most important first) as semicolon-separated groups of
    comma-separated feature names, one line."""
    text = ";".join(",".join(feature_names[f] for f in group)
                    for group in tie_groups)
    atomic_write_text(path, text + "\n")


def read_truth(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        line = fh.readline().strip()
    if not line:
        raise ValueError(f"{path}: empty truth file")
    return [group.split(",") for group in line.split(";")]


# -- figures ---------------------------------------------------------------

def _line_figure(path, x, y, xlabel, ylabel, title, ylim=None):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, y, marker="o")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if ylim:
        ax.set_ylim(*ylim)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_ndcg_figure(path, ks, ndcg_values):
    _line_figure(path, ks, ndcg_values, "K", "NDCG@K",
                 "Ranking quality vs ground truth", ylim=(0.0, 1.05))


def render_sweep_figure(path, r_values, accuracies):
    _line_figure(path, r_values, accuracies, "amplification coefficient r",
                 "test accuracy", "Impact of amplification coefficient")


def render_history_figure(path, history):
    epochs = [rec.epoch for rec in history.records]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6, 6), sharex=True)
    ax1.plot(epochs, [rec.train_loss for rec in history.records], marker=".")
    ax1.set_ylabel("train loss")
    ax1.grid(True, alpha=0.3)
    ax2.plot(epochs, [rec.val_accuracy for rec in history.records], marker=".")
    ax2.axvline(history.best_epoch, color="gray", linestyle="--", alpha=0.7)
    ax2.set_ylabel("validation accuracy")
    ax2.set_xlabel("epoch")
    ax2.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_history(path, history, delimiter: str = ","):
    rows = [(rec.epoch, format_float(rec.train_loss),
             format_float(rec.val_accuracy)) for rec in history.records]
    write_delimited(path, ("epoch", "train_loss", "val_accuracy"), rows,
                    delimiter)
