"""CSV ingestion: cleaning, per-class sampling, train/test split, scaling.

The expected input layout is the usual flow-record export: one header line,
one row per flow, numeric feature columns plus a string label column, and an
optional timestamp column that gets dropped.  All randomness is driven by
explicit seeds so a given plan always selects the same rows.
"""

from __future__ import annotations

import csv
import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError

# Default label/column conventions of the supported CSV layout.
DEFAULT_LABEL_COLUMN = "Label"
DEFAULT_DROP_COLUMNS = ("Timestamp",)
DEFAULT_PROBLEMATIC_CLASS = "DoS attacks-SlowHTTPTest"


@dataclass
class RawTable:
    """Parsed CSV: header plus string-valued rows, all the same width."""

    header: list[str]
    rows: list[list[str]]


@dataclass
class Dataset:
    """Numeric sample matrix with integer class labels.

    X is (n, m) float64 and fully finite; y holds class indices into
    class_names.  Instances are immutable by convention: nothing in this
    package mutates a Dataset after construction.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: list[str]
    class_names: list[str]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise ValueError("X must be 2-D")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y row counts differ")
        if self.X.shape[1] != len(self.feature_names):
            raise ValueError("feature_names length != X columns")
        if self.X.size and not np.isfinite(self.X).all():
            raise ValueError("X contains non-finite values")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= len(self.class_names)):
            raise ValueError("class index out of range")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def k(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.k)


@dataclass(frozen=True)
class SamplingPlan:
    """How many rows to keep per class and which classes to leave out."""

    per_class_cap: int = 5000
    excluded_classes: tuple[str, ...] = ()
    include_problematic: bool = False
    problematic_class: str | None = DEFAULT_PROBLEMATIC_CLASS
    seed: int = 0

    def __post_init__(self):
        if self.per_class_cap < 1:
            raise ValueError("per_class_cap must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class SplitPair:
    train: Dataset
    test: Dataset
    ratio: float
    seed: int


@dataclass
class ScalerParams:
    """Per-feature z-score parameters fit on the training split.

    Zero-variance columns are recorded as (mean 0, std 1) so applying the
    transform leaves them untouched.
    """

    means: np.ndarray
    std_devs: np.ndarray

    def __post_init__(self):
        self.means = np.asarray(self.means, dtype=np.float64)
        self.std_devs = np.asarray(self.std_devs, dtype=np.float64)
        if (self.std_devs <= 0).any():
            raise ValueError("std_devs must be strictly positive")


def load_csv(path: str | Path) -> RawTable:
    """Read an RFC-4180-style CSV into a RawTable.

    Raises DataError on a missing header or on any row whose cell count
    differs from the header's (reporting the offending line number).
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: missing header") from None
        width = len(header)
        rows = []
        for row in reader:
            if not row:
                continue  # blank trailing line
            if len(row) != width:
                raise DataError(
                    f"{path}: line {reader.line_num} has {len(row)} cells, expected {width}"
                )
            rows.append(row)
    return RawTable(header=header, rows=rows)


def _parse_cell(cell: str) -> float | None:
    """float value if the cell parses and is finite, else None."""
    try:
        v = float(cell)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def clean(
    raw: RawTable,
    label_column: str = DEFAULT_LABEL_COLUMN,
    drop_columns: tuple[str, ...] = DEFAULT_DROP_COLUMNS,
) -> Dataset:
    """Turn a RawTable into a numeric Dataset.

    Drops rows with any missing/non-finite feature cell (empty, NaN, inf,
    unparseable), drops stray repeated-header rows whose label cell equals
    the label column name, and excludes drop_columns entirely.  Class
    indices are assigned in sorted class-name order so they are stable
    across runs and input orderings.
    """
    if label_column not in raw.header:
        raise DataError(f"label column {label_column!r} not in header")
    dropset = set(drop_columns)
    label_idx = raw.header.index(label_column)
    feat_idx = [
        i for i, name in enumerate(raw.header) if i != label_idx and name not in dropset
    ]
    feature_names = [raw.header[i] for i in feat_idx]

    values: list[list[float]] = []
    labels: list[str] = []
    for row in raw.rows:
        label = row[label_idx]
        if label == label_column:
            continue  # stray header repetition inside the file
        feats = []
        ok = True
        for i in feat_idx:
            v = _parse_cell(row[i])
            if v is None:
                ok = False
                break
            feats.append(v)
        if ok:
            values.append(feats)
            labels.append(label)
    if not values:
        raise DataError("no rows survived cleaning")

    class_names = sorted(set(labels))
    index = {name: k for k, name in enumerate(class_names)}
    y = np.fromiter((index[lab] for lab in labels), dtype=np.int64, count=len(labels))
    X = np.array(values, dtype=np.float64)
    return Dataset(X=X, y=y, feature_names=feature_names, class_names=class_names)


def _class_rng(seed: int, class_name: str) -> np.random.Generator:
    # Per-class stream keyed on the class name, so the rows drawn for one
    # class do not depend on which other classes are present.
    tag = zlib.crc32(class_name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([seed, tag]))


def sample_per_class(data: Dataset, plan: SamplingPlan) -> Dataset:
    """Draw up to per_class_cap rows per class, uniformly without replacement.

    Classes smaller than the cap are kept whole.  Excluded classes (and the
    problematic class, unless include_problematic) are removed entirely and
    the remaining classes re-indexed. Output rows are grouped by class in
    class-index order; within a class the original row order is kept.
    """
    missing = set(plan.excluded_classes) - set(data.class_names)
    if missing:
        raise DataError(f"excluded classes not in dataset: {sorted(missing)}")
    excluded = set(plan.excluded_classes)
    if not plan.include_problematic and plan.problematic_class in data.class_names:
        excluded.add(plan.problematic_class)

    kept = [name for name in data.class_names if name not in excluded]
    if not kept:
        raise DataError("all classes excluded")

    parts = []
    new_y = []
    for new_idx, name in enumerate(kept):
        rows = np.flatnonzero(data.y == data.class_names.index(name))
        if rows.size > plan.per_class_cap:
            rng = _class_rng(plan.seed, name)
            chosen = rng.choice(rows.size, size=plan.per_class_cap, replace=False)
            chosen.sort()
            rows = rows[chosen]
        parts.append(data.X[rows])
        new_y.append(np.full(rows.size, new_idx, dtype=np.int64))
    return Dataset(
        X=np.concatenate(parts, axis=0),
        y=np.concatenate(new_y),
        feature_names=list(data.feature_names),
        class_names=kept,
    )


def split(data: Dataset, ratio: float, seed: int) -> SplitPair:
    """Uniform (non-stratified) random split; train gets round(ratio * n) rows."""
    if not 0 < ratio <= 1:
        raise ValueError("ratio must be in (0, 1]")
    if data.n == 0:
        raise DataError("cannot split an empty dataset")
    perm = np.random.default_rng(seed).permutation(data.n)
    n_train = int(round(ratio * data.n))
    tr, te = perm[:n_train], perm[n_train:]

    def take(idx):
        return Dataset(
            X=data.X[idx],
            y=data.y[idx],
            feature_names=list(data.feature_names),
            class_names=list(data.class_names),
        )

    return SplitPair(train=take(tr), test=take(te), ratio=ratio, seed=seed)


def fit_scaler(train: Dataset) -> ScalerParams:
    """Per-feature mean/std from the training split (population std)."""
    if train.n == 0:
        raise DataError("cannot fit scaler on an empty training set")
    means = train.X.mean(axis=0)
    stds = train.X.std(axis=0)
    constant = stds == 0
    means = np.where(constant, 0.0, means)
    stds = np.where(constant, 1.0, stds)
    return ScalerParams(means=means, std_devs=stds)


def apply_scaler(X: np.ndarray, params: ScalerParams, subset=None) -> np.ndarray:
    """z-score X with the stored parameters, optionally column-restricted."""
    if subset is None:
        return (X - params.means) / params.std_devs
    cols = np.asarray(subset, dtype=np.int64)
    return (X - params.means[cols]) / params.std_devs[cols]


def standardize(pair: SplitPair) -> tuple[SplitPair, ScalerParams]:
    """z-score both splits using statistics of the training split only."""
    params = fit_scaler(pair.train)

    def transform(ds: Dataset) -> Dataset:
        return Dataset(
            X=apply_scaler(ds.X, params),
            y=ds.y,
            feature_names=list(ds.feature_names),
            class_names=list(ds.class_names),
        )

    scaled = SplitPair(
        train=transform(pair.train),
        test=transform(pair.test),
        ratio=pair.ratio,
        seed=pair.seed,
    )
    return scaled, params


def save_dataset(data: Dataset, path: str | Path, label_column: str = DEFAULT_LABEL_COLUMN):
    """Write a Dataset back to the input CSV dialect (features + label)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.feature_names) + [label_column])
        for i in range(data.n):
            row = [repr(float(v)) for v in data.X[i]]
            row.append(data.class_names[data.y[i]])
            writer.writerow(row)


def save_manifest(data: Dataset, plan: SamplingPlan, path: str | Path):
    """Sidecar JSON describing how a cached dataset was produced."""
    doc = {
        "seed": plan.seed,
        "per_class_cap": plan.per_class_cap,
        "excluded_classes": sorted(plan.excluded_classes),
        "include_problematic": plan.include_problematic,
        "problematic_class": plan.problematic_class,
        "rows": int(data.n),
        "features": int(data.m),
        "class_counts": {
            name: int(c) for name, c in zip(data.class_names, data.class_counts())
        },
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
