"""Tabular feature datasets (instances x window features)."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from respsound.errors import DataError
from respsound.features import FEATURE_NAMES, WindowFeatureVector

log = logging.getLogger(__name__)


@dataclass
class FeatureDataset:
    matrix: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES
    label_catalog: tuple[str, ...] = ()

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=object)
        self.feature_names = tuple(self.feature_names)
        if self.matrix.ndim != 2:
            raise DataError("feature matrix must be 2-D")
        if self.matrix.shape[0] != len(self.labels):
            raise DataError(f"{self.matrix.shape[0]} rows but {len(self.labels)} labels")
        if self.matrix.shape[1] != len(self.feature_names):
            raise DataError("column count does not match feature names")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise DataError("duplicate feature names")
        if not np.all(np.isfinite(self.matrix)):
            raise DataError("feature matrix contains NaN or Inf")
        if not self.label_catalog:
            self.label_catalog = tuple(dict.fromkeys(self.labels.tolist()))
        else:
            self.label_catalog = tuple(self.label_catalog)
            unknown = set(self.labels.tolist()) - set(self.label_catalog)
            if unknown:
                raise DataError(f"labels not in catalog: {sorted(unknown)}")

    def __len__(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]

    @property
    def y(self) -> np.ndarray:
        """Labels as integer indices into ``label_catalog``."""
        lookup = {c: i for i, c in enumerate(self.label_catalog)}
        return np.array([lookup[v] for v in self.labels], dtype=np.int64)

    def classes_present(self) -> list[str]:
        present = set(self.labels.tolist())
        return [c for c in self.label_catalog if c in present]

    def subset(self, rows) -> "FeatureDataset":
        return FeatureDataset(self.matrix[rows], self.labels[rows], self.feature_names, self.label_catalog)

    def select_features(self, names: Sequence[str]) -> "FeatureDataset":
        missing = [n for n in names if n not in self.feature_names]
        if missing:
            raise DataError(f"unknown features: {', '.join(missing)}")
        cols = [self.feature_names.index(n) for n in names]
        return FeatureDataset(self.matrix[:, cols], self.labels, tuple(names), self.label_catalog)

    def filter_classes(self, classes: Sequence[str]) -> "FeatureDataset":
        missing = [c for c in classes if c not in self.label_catalog]
        if missing:
            raise DataError(f"unknown classes: {', '.join(missing)}")
        keep = np.isin(self.labels, list(classes))
        return FeatureDataset(self.matrix[keep], self.labels[keep], self.feature_names, tuple(classes))

    @classmethod
    def from_vectors(cls, vectors: Sequence[WindowFeatureVector], label_catalog=()) -> "FeatureDataset":
        kept = [v for v in vectors if not v.degenerate]
        if len(kept) < len(vectors):
            log.warning("dropped %d degenerate windows", len(vectors) - len(kept))
        if any(v.label is None for v in kept):
            raise DataError("every vector needs a label to build a dataset")
        matrix = np.array([v.to_array() for v in kept]).reshape(len(kept), len(FEATURE_NAMES))
        return cls(matrix, [v.label for v in kept], FEATURE_NAMES, tuple(label_catalog))


def read_feature_csv(path) -> FeatureDataset:
    """Read a feature CSV: feature columns by name, then ``label``."""
    with open(Path(path), encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "label":
            raise DataError(f"{path}: last column must be 'label'")
        names = tuple(header[:-1])
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                rows.append([float(v) for v in row[:-1]])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            labels.append(row[-1])
    if not rows:
        raise DataError(f"{path}: no instances")
    return FeatureDataset(np.array(rows), labels, names)


def write_dataset_csv(path, data: FeatureDataset) -> None:
    with open(Path(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*data.feature_names, "label"])
        for row, label in zip(data.matrix, data.labels):
            writer.writerow([repr(float(v)) for v in row] + [label])
