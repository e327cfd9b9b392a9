"""Tabular ingestion, one-hot encoding, splitting, and synthetic data.

Numeric columns pass through untouched (no scaling); categorical columns
expand to one indicator per training-set category, ordered lexicographically
so the encoded width d and the class indices are reproducible.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass

import numpy as np

from .seeding import rng_for

MISSING_TOKENS = ("", "NA", "?")

ENCODER_FORMAT = "ifenet-encoder"
ENCODER_VERSION = 1


class DataError(Exception):
    pass


@dataclass
class RawTable:
    columns: list[str]
    kinds: dict[str, str]            # column -> "numeric" | "categorical"
    rows: list[list[str | None]]     # None marks a missing cell
    label_column: str

    def column_index(self, name: str) -> int:
        return self.columns.index(name)


@dataclass
class EncoderSpec:
    # ("num", column) or ("ind", column, category)
    features: list[tuple]
    label_map: dict[str, int]
    label_column: str

    @property
    def feature_names(self) -> list[str]:
        names = []
        for f in self.features:
            names.append(f[1] if f[0] == "num" else f"{f[1]}={f[2]}")
        return names

    def to_json(self) -> str:
        payload = {
            "format": ENCODER_FORMAT,
            "version": ENCODER_VERSION,
            "label_column": self.label_column,
            "label_map": self.label_map,
            "features": [list(f) for f in self.features],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EncoderSpec":
        payload = json.loads(text)
        if payload.get("format") != ENCODER_FORMAT:
            raise DataError("not an encoder file")
        if payload.get("version") != ENCODER_VERSION:
            raise DataError(f"unsupported encoder version {payload.get('version')}")
        return cls(features=[tuple(f) for f in payload["features"]],
                   label_map=dict(payload["label_map"]),
                   label_column=payload["label_column"])


@dataclass
class EncodedDataset:
    X: np.ndarray                 # n x d float64
    y: np.ndarray                 # n int64 class indices
    feature_names: list[str]
    num_classes: int
    # synthetic only: tie groups of feature indices, most important first
    truth_groups: list[list[int]] | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, indices) -> "EncodedDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return EncodedDataset(self.X[idx].copy(), self.y[idx].copy(),
                              list(self.feature_names), self.num_classes,
                              self.truth_groups)


@dataclass
class SplitSpec:
    train: float
    val: float
    test: float
    seed: int = 0
    stratify: bool = True
    # values > 1 are read as absolute counts, otherwise fractions
    absolute: bool = False


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def load_csv(path, label_column: str, column_kinds: dict[str, str] | None = None,
             missing_tokens=MISSING_TOKENS, delimiter: str = ",") -> RawTable:
    """Read a headered delimited file into a RawTable, inferring column kinds."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh, delimiter=delimiter)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            raw_rows = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    if label_column not in header:
        raise DataError(f"label column {label_column!r} not in header {header}")
    rows: list[list[str | None]] = []
    for i, row in enumerate(raw_rows):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(row)} cells, "
                            f"expected {len(header)}")
        rows.append([None if cell.strip() in missing_tokens else cell.strip()
                     for cell in row])

    kinds = {}
    for j, col in enumerate(header):
        if column_kinds and col in column_kinds:
            kinds[col] = column_kinds[col]
            continue
        seen = [r[j] for r in rows if r[j] is not None]
        kinds[col] = "numeric" if seen and all(_is_number(v) for v in seen) \
            else "categorical"
    kinds[label_column] = "categorical"  # labels are class values, never scaled
    return RawTable(header, kinds, rows, label_column)


def drop_missing(table: RawTable) -> RawTable:
    kept = [row for row in table.rows if all(cell is not None for cell in row)]
    if not kept:
        raise DataError("all rows contain missing values")
    return RawTable(table.columns, dict(table.kinds), kept, table.label_column)


def fit_encoder(table: RawTable) -> EncoderSpec:
    label_j = table.column_index(table.label_column)
    features: list[tuple] = []
    for j, col in enumerate(table.columns):
        if j == label_j:
            continue
        if table.kinds[col] == "numeric":
            features.append(("num", col))
        else:
            cats = sorted({row[j] for row in table.rows})
            if len(cats) == 1:
                warnings.warn(f"categorical column {col!r} has a single "
                              f"category; keeping one indicator")
            features.extend(("ind", col, cat) for cat in cats)
    classes = sorted({row[label_j] for row in table.rows})
    if len(classes) < 2:
        raise DataError(f"label column has {len(classes)} class(es); need >= 2")
    return EncoderSpec(features=features,
                       label_map={c: i for i, c in enumerate(classes)},
                       label_column=table.label_column)


def apply_encoder(spec: EncoderSpec, table: RawTable) -> EncodedDataset:
    col_idx = {c: j for j, c in enumerate(table.columns)}
    for f in spec.features:
        if f[1] not in col_idx:
            raise DataError(f"column {f[1]!r} missing from table")
    label_j = col_idx[spec.label_column]

    n, d = len(table.rows), len(spec.features)
    X = np.zeros((n, d))
    y = np.zeros(n, dtype=np.int64)
    for i, row in enumerate(table.rows):
        label = row[label_j]
        if label not in spec.label_map:
            raise DataError(f"row {i}: unseen label value {label!r}")
        y[i] = spec.label_map[label]
        for k, f in enumerate(spec.features):
            cell = row[col_idx[f[1]]]
            if f[0] == "num":
                X[i, k] = float(cell)
            elif cell == f[2]:
                # unseen categories simply leave all indicators at zero
                X[i, k] = 1.0
    return EncodedDataset(X, y, spec.feature_names, len(spec.label_map))


def _resolve_counts(spec: SplitSpec, n: int) -> tuple[int, int, int]:
    parts = (spec.train, spec.val, spec.test)
    if spec.absolute or all(p > 1 for p in parts):
        counts = tuple(int(p) for p in parts)
    else:
        n_val = int(spec.val * n)
        n_test = int(spec.test * n)
        counts = (n - n_val - n_test, n_val, n_test)
    if sum(counts) != n or any(c < 0 for c in counts):
        raise DataError(f"split counts {counts} infeasible for n={n}")
    return counts


def split(ds: EncodedDataset, spec: SplitSpec):
    """Deterministic (seeded) partition into train/validation/test."""
    n = ds.n
    n_train, n_val, n_test = _resolve_counts(spec, n)
    rng = rng_for(spec.seed, "split")

    stratify = spec.stratify
    if stratify:
        class_counts = np.bincount(ds.y, minlength=ds.num_classes)
        if np.any(class_counts[class_counts > 0] < 3) or min(n_train, n_val, n_test) < ds.num_classes:
            warnings.warn("stratification infeasible; falling back to a plain "
                          "shuffled split")
            stratify = False

    if not stratify:
        perm = rng.permutation(n)
        tr = list(perm[:n_train])
        va = list(perm[n_train:n_train + n_val])
        te = list(perm[n_train + n_val:])
    else:
        tr, va, te = [], [], []
        f_tr, f_va = n_train / n, n_val / n
        for c in range(ds.num_classes):
            members = rng.permutation(np.flatnonzero(ds.y == c))
            m = len(members)
            if m == 0:
                continue
            a = int(round(m * f_tr))
            b = int(round(m * (f_tr + f_va)))
            a = min(max(a, 1), m - 2)
            b = min(max(b, a + 1), m - 1)
            tr.extend(members[:a])
            va.extend(members[a:b])
            te.extend(members[b:])
        # per-class rounding can leave splits off target by a few rows;
        # shuttle surplus rows to deficient splits (class mix stays close)
        pools = [(tr, n_train), (va, n_val), (te, n_test)]
        for pool, target in pools:
            while len(pool) > target:
                moved = pool.pop()
                dest = next(p for p, t in pools if len(p) < t)
                dest.append(moved)
    return (ds.subset(np.sort(np.asarray(tr, dtype=np.int64))),
            ds.subset(np.sort(np.asarray(va, dtype=np.int64))),
            ds.subset(np.sort(np.asarray(te, dtype=np.int64))))


def write_encoded_csv(ds: EncodedDataset, path, delimiter: str = ","):
    """One header row of feature names plus a trailing label column; float
    cells use repr so a rerun with the same seed is byte-identical."""
    import io as _io
    import os as _os
    buf = _io.StringIO()
    writer = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    writer.writerow(list(ds.feature_names) + ["label"])
    for i in range(ds.n):
        writer.writerow([repr(float(v)) for v in ds.X[i]] + [int(ds.y[i])])
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    _os.replace(tmp, path)


def read_encoded_csv(path, num_classes: int, delimiter: str = ",") -> EncodedDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        header = next(reader)
        rows = list(reader)
    if not header or header[-1] != "label":
        raise DataError(f"{path}: expected a trailing 'label' column")
    names = header[:-1]
    X = np.array([[float(c) for c in row[:-1]] for row in rows])
    y = np.array([int(row[-1]) for row in rows], dtype=np.int64)
    return EncodedDataset(X, y, names, num_classes)


def synth_dataset(n: int, d: int, k_informative: int, noise: float,
                  seed: int) -> EncodedDataset:
    """Gaussian features with a planted linear binary concept.

    The label is 1 iff sum_{i<k} (k - i) * x_i + noise * eps > 0, so features
    0..k-1 matter with strictly decreasing strength and the rest are pure
    noise (one tied truth group at the bottom).
    """
    if not (1 <= k_informative <= d):
        raise DataError(f"k_informative={k_informative} outside [1, {d}]")
    if n < 10:
        raise DataError(f"n={n} too small; need >= 10")
    if noise < 0:
        raise DataError("noise must be >= 0")
    rng = rng_for(seed, "synth")
    X = rng.standard_normal((n, d))
    coeffs = np.arange(k_informative, 0, -1, dtype=np.float64)
    score = X[:, :k_informative] @ coeffs + noise * rng.standard_normal(n)
    y = (score > 0).astype(np.int64)
    groups = [[i] for i in range(k_informative)]
    if k_informative < d:
        groups.append(list(range(k_informative, d)))
    names = [f"x{i}" for i in range(d)]
    return EncodedDataset(X, y, names, 2, truth_groups=groups)
