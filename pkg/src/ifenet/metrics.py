"""Classification metrics, NDCG ranking evaluation, permutation importance,
and rank correlation.

Precision/recall/f-score are computed one-vs-rest per class and macro
averaged; 0/0 is defined as 0 so degenerate classes do not poison the means.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .seeding import rng_for


class MetricsError(Exception):
    pass


@dataclass
class MetricsReport:
    accuracy: float
    per_class: list[dict]            # {"precision", "recall", "f1"} per class
    precision_macro: float
    recall_macro: float
    f1_macro: float

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy,
                "precision_macro": self.precision_macro,
                "recall_macro": self.recall_macro,
                "f1_macro": self.f1_macro,
                "per_class": self.per_class}


def confusion(predictions, labels, num_classes: int | None = None) -> np.ndarray:
    """C x C counts, rows = true class, columns = predicted class."""
    preds = np.asarray(predictions, dtype=np.int64).ravel()
    labs = np.asarray(labels, dtype=np.int64).ravel()
    if preds.shape != labs.shape:
        raise MetricsError(f"{preds.shape[0]} predictions vs {labs.shape[0]} labels")
    if preds.size == 0:
        raise MetricsError("empty inputs")
    c = int(max(preds.max(), labs.max())) + 1 if num_classes is None else num_classes
    if preds.min() < 0 or labs.min() < 0 or max(preds.max(), labs.max()) >= c:
        raise MetricsError(f"class index outside [0, {c})")
    cm = np.zeros((c, c), dtype=np.int64)
    np.add.at(cm, (labs, preds), 1)
    return cm


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def classification_metrics(cm: np.ndarray) -> MetricsReport:
    cm = np.asarray(cm)
    total = int(cm.sum())
    if total == 0:
        raise MetricsError("empty confusion matrix")
    per_class = []
    for c in range(cm.shape[0]):
        tp = float(cm[c, c])
        fp = float(cm[:, c].sum() - tp)
        fn = float(cm[c, :].sum() - tp)
        p = _safe_div(tp, tp + fp)
        r = _safe_div(tp, tp + fn)
        f = _safe_div(2 * p * r, p + r)
        per_class.append({"precision": p, "recall": r, "f1": f})
    return MetricsReport(
        accuracy=float(np.trace(cm)) / total,
        per_class=per_class,
        precision_macro=float(np.mean([x["precision"] for x in per_class])),
        recall_macro=float(np.mean([x["recall"] for x in per_class])),
        f1_macro=float(np.mean([x["f1"] for x in per_class])),
    )


def ndcg_at_k(predicted_order, grades, k: int) -> float:
    """Graded NDCG with the standard 1/log2(rank + 1) discount."""
    order = list(predicted_order)
    grades = np.asarray(grades, dtype=np.float64)
    d = grades.shape[0]
    if sorted(order) != list(range(d)):
        raise MetricsError("predicted order is not a permutation of the features")
    if not (1 <= k <= d):
        raise MetricsError(f"k={k} outside [1, {d}]")
    if np.any(grades < 0):
        raise MetricsError("grades must be >= 0")
    if not np.any(grades > 0):
        raise MetricsError("all grades are zero; NDCG undefined")
    discounts = 1.0 / np.log2(np.arange(1, k + 1) + 1)
    dcg = float(np.sum(grades[order[:k]] * discounts))
    ideal = np.sort(grades)[::-1][:k]
    idcg = float(np.sum(ideal * discounts))
    return dcg / idcg


def grades_from_ranking(tie_groups: list[list[int]], d: int) -> np.ndarray:
    """Relevance grades from a ground-truth order: tie group g (0 = most
    important) of G groups gets grade G - 1 - g."""
    seen = [f for group in tie_groups for f in group]
    if sorted(seen) != list(range(d)):
        raise MetricsError("truth does not cover every feature exactly once")
    grades = np.zeros(d)
    n_groups = len(tie_groups)
    for g, group in enumerate(tie_groups):
        for f in group:
            grades[f] = n_groups - 1 - g
    return grades


def permutation_importance(predict_fn, X: np.ndarray, y: np.ndarray,
                           repeats: int = 5, seed: int = 0):
    """Accuracy drop when one feature column is shuffled.

    predict_fn(X) -> class indices. Returns (order, importances) with features
    ranked by descending mean drop, ties by ascending index.
    """
    if repeats < 1:
        raise MetricsError("repeats must be >= 1")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    baseline = float(np.mean(predict_fn(X) == y))
    d = X.shape[1]
    importances = np.zeros(d)
    for j in range(d):
        drops = []
        for rep in range(repeats):
            rng = rng_for(seed, "perm", j, rep)
            shuffled = X.copy()
            shuffled[:, j] = shuffled[rng.permutation(X.shape[0]), j]
            drops.append(baseline - float(np.mean(predict_fn(shuffled) == y)))
        importances[j] = np.mean(drops)
    order = sorted(range(d), key=lambda i: (-importances[i], i))
    return order, importances


def rank_correlation(order_a, order_b) -> float:
    """Spearman rho between two tie-free orderings of the same feature set."""
    a, b = list(order_a), list(order_b)
    if sorted(a) != sorted(b):
        raise MetricsError("orders cover different feature sets")
    n = len(a)
    rank_a = {f: i for i, f in enumerate(a)}
    rank_b = {f: i for i, f in enumerate(b)}
    d2 = sum((rank_a[f] - rank_b[f]) ** 2 for f in a)
    return 1.0 - 6.0 * d2 / (n * (n * n - 1))
