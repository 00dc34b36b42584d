"""Tabular dataset loading, z-scoring and time-ordered splitting."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Input data is malformed or unusable."""


@dataclass(frozen=True)
class Dataset:
    """Time-ordered feature matrix with integer class labels.

    ``features[t, i]`` is feature ``i`` observed at time ``t``; ``labels[t]``
    indexes into ``class_names``.
    """

    feature_names: tuple[str, ...]
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    constant_columns: tuple[str, ...] = field(default=())

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.intp)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if feats.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {feats.shape}")
        if feats.shape[0] != labels.shape[0]:
            raise DataError(f"{feats.shape[0]} feature rows but {labels.shape[0]} labels")
        if feats.shape[0] < 1:
            raise DataError("a dataset needs at least 1 row")
        if feats.shape[1] != len(self.feature_names):
            raise DataError(
                f"{feats.shape[1]} feature columns but {len(self.feature_names)} names")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("feature names must be unique")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise DataError("label index out of range of class_names")
        if not np.all(np.isfinite(feats)):
            raise DataError("features contain missing or non-finite values")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return self.n_rows

    def column_index(self, names) -> list[int]:
        lookup = {n: i for i, n in enumerate(self.feature_names)}
        missing = [n for n in names if n not in lookup]
        if missing:
            raise DataError(
                f"unknown feature(s) {missing}; valid names: {list(self.feature_names)}")
        return [lookup[n] for n in names]

    def subset_rows(self, rows) -> "Dataset":
        return replace(self, features=self.features[rows], labels=self.labels[rows])

    def with_column(self, name: str, values: np.ndarray) -> "Dataset":
        return replace(
            self,
            feature_names=self.feature_names + (name,),
            features=np.column_stack([self.features, values]),
        )


@dataclass(frozen=True)
class SplitDataset:
    train: Dataset
    test: Dataset
    split_fraction: float


def load_csv(path, label_column: str, pin_benign: str | None = None) -> Dataset:
    """Read a headered CSV; every column but ``label_column`` must be numeric.

    Labels map to class indices in order of first appearance.  When
    ``pin_benign`` names a label value, that value is forced to index 0.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise DataError(f"{path}: duplicate header names {dupes}")
        if label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not in header {header}")
        li = header.index(label_column)
        names = [h for j, h in enumerate(header) if j != li]
        rows, raw_labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            vals = []
            for j, cell in enumerate(rec):
                if j == li:
                    continue
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}:{lineno}: non-numeric value {cell!r} in column {header[j]!r}"
                    ) from None
            rows.append(vals)
            raw_labels.append(rec[li].strip())
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows, found {len(rows)}")
    classes = list(dict.fromkeys(raw_labels))
    if pin_benign is not None:
        if pin_benign not in classes:
            raise DataError(f"{path}: benign label {pin_benign!r} does not occur")
        classes.remove(pin_benign)
        classes.insert(0, pin_benign)
    index = {c: i for i, c in enumerate(classes)}
    return Dataset(
        feature_names=tuple(names),
        features=np.array(rows, dtype=np.float64).reshape(len(rows), len(names)),
        labels=np.array([index[c] for c in raw_labels], dtype=np.intp),
        class_names=tuple(classes),
    )


def write_csv(d: Dataset, path, label_column: str = "y") -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(d.feature_names) + [label_column])
        for row, lab in zip(d.features, d.labels):
            w.writerow([repr(float(v)) if not float(v).is_integer() else str(int(v))
                        for v in row] + [d.class_names[lab]])


@dataclass(frozen=True)
class ZScore:
    """Per-column standardisation fitted on one dataset, applicable to others."""

    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # bool mask

    @classmethod
    def fit(cls, d: Dataset) -> "ZScore":
        mean = d.features.mean(axis=0)
        std = d.features.std(axis=0)
        constant = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
        return cls(mean=mean, std=np.where(constant, 1.0, std), constant=constant)

    def apply(self, d: Dataset) -> Dataset:
        z = (d.features - self.mean) / self.std
        z[:, self.constant] = 0.0
        const = tuple(n for n, c in zip(d.feature_names, self.constant) if c)
        return replace(d, features=z, constant_columns=const)


def normalize(d: Dataset) -> Dataset:
    """Z-score every column with its own mean and population std.

    Constant columns become all-zero and are listed in ``constant_columns``.
    """
    scaler = ZScore.fit(d)
    out = scaler.apply(d)
    if out.constant_columns:
        log.warning("constant feature columns set to zero: %s", ", ".join(out.constant_columns))
    return out


def split(d: Dataset, fraction: float) -> SplitDataset:
    """Contiguous split: the first ``round(fraction * rows)`` rows are train."""
    if not 0.0 < fraction < 1.0:
        raise DataError(f"split fraction must lie in (0, 1), got {fraction}")
    n_train = int(round(fraction * d.n_rows))
    if n_train < 1 or n_train >= d.n_rows:
        raise DataError(
            f"fraction {fraction} on {d.n_rows} rows leaves an empty train or test part")
    return SplitDataset(
        train=d.subset_rows(slice(0, n_train)),
        test=d.subset_rows(slice(n_train, None)),
        split_fraction=fraction,
    )


def normalize_split(s: SplitDataset) -> SplitDataset:
    """Standardise both parts with statistics of the train part only."""
    scaler = ZScore.fit(s.train)
    train = scaler.apply(s.train)
    if train.constant_columns:
        log.warning("constant feature columns set to zero: %s",
                    ", ".join(train.constant_columns))
    return SplitDataset(train=train, test=scaler.apply(s.test),
                        split_fraction=s.split_fraction)
