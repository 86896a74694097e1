"""Cross-validation, confusion matrices and precision/recall/F-measure reports."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from respsound.dataset import FeatureDataset
from respsound.errors import DataError
from respsound.models import ClassifierConfig, train


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    label_catalog: tuple[str, ...]

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.label_catalog)
        if self.counts.shape != (n, n):
            raise ValueError(f"counts must be {n}x{n}")
        if (self.counts < 0).any():
            raise ValueError("negative counts")

    @classmethod
    def zeros(cls, label_catalog) -> "ConfusionMatrix":
        n = len(label_catalog)
        return cls(np.zeros((n, n), dtype=np.int64), tuple(label_catalog))

    def add(self, actual: str, predicted: str) -> None:
        self.counts[self.label_catalog.index(actual), self.label_catalog.index(predicted)] += 1

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.label_catalog != other.label_catalog:
            raise ValueError("label catalogs differ")
        return ConfusionMatrix(self.counts + other.counts, self.label_catalog)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class EvalReport:
    per_class: dict[str, ClassMetrics]
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    accuracy: float
    confusion: ConfusionMatrix
    folds: np.ndarray | None = None
    classifier: str = ""
    feature_names: tuple[str, ...] = field(default_factory=tuple)

    def table(self) -> str:
        """Aligned text table, three decimals."""
        names = list(self.per_class)
        width = max([len(n) for n in names] + [len("Weighted Avg.")])
        lines = []
        if self.classifier:
            lines.append(f"classifier: {self.classifier}")
        if self.feature_names:
            lines.append(f"features (m={len(self.feature_names)}): {', '.join(self.feature_names)}")
        lines.append(f"classes (n={len(names)}): {', '.join(names)}")
        lines.append(f"instances: {self.confusion.total}")
        lines.append("")
        lines.append(f"{'Class':<{width}}  Precision  Recall  F-measure  Support")
        for n, m in self.per_class.items():
            lines.append(f"{n:<{width}}  {m.precision:9.3f}  {m.recall:6.3f}  {m.f1:9.3f}  {m.support:7d}")
        lines.append(
            f"{'Weighted Avg.':<{width}}  {self.weighted_precision:9.3f}  {self.weighted_recall:6.3f}  "
            f"{self.weighted_f1:9.3f}  {self.confusion.total:7d}"
        )
        lines.append("")
        lines.append(f"Accuracy: {self.accuracy:.3f}")
        lines.append("")
        lines.append("Confusion matrix (rows = actual, columns = predicted):")
        cw = max(6, max(len(n) for n in names))
        lines.append(" " * (width + 2) + "".join(f"{n:>{cw + 1}}" for n in names))
        for n, row in zip(names, self.confusion.counts):
            lines.append(f"{n:<{width}}  " + "".join(f"{v:>{cw + 1}d}" for v in row))
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "precision", "recall", "f_measure", "support"])
        for n, m in self.per_class.items():
            w.writerow([n, f"{m.precision:.3f}", f"{m.recall:.3f}", f"{m.f1:.3f}", m.support])
        w.writerow([
            "weighted_avg", f"{self.weighted_precision:.3f}", f"{self.weighted_recall:.3f}",
            f"{self.weighted_f1:.3f}", self.confusion.total,
        ])
        w.writerow(["accuracy", f"{self.accuracy:.3f}", "", "", self.confusion.total])
        return buf.getvalue()


def metrics_from_matrix(cm: ConfusionMatrix) -> EvalReport:
    counts = cm.counts.astype(np.float64)
    total = counts.sum()
    if total <= 0:
        raise DataError("confusion matrix is empty")
    tp = np.diag(counts)
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    precision = np.divide(tp, col, out=np.zeros_like(tp), where=col > 0)
    recall = np.divide(tp, row, out=np.zeros_like(tp), where=row > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    per_class = {
        name: ClassMetrics(float(precision[i]), float(recall[i]), float(f1[i]), int(row[i]))
        for i, name in enumerate(cm.label_catalog)
    }
    return EvalReport(
        per_class=per_class,
        weighted_precision=float(np.dot(row, precision) / total),
        weighted_recall=float(np.dot(row, recall) / total),
        weighted_f1=float(np.dot(row, f1) / total),
        accuracy=float(tp.sum() / total),
        confusion=cm,
    )


def stratified_kfold(data: FeatureDataset, folds: int = 10, seed: int = 0) -> np.ndarray:
    """Assign each instance a fold in ``[0, folds)``.

    Each class is shuffled, then the classes are dealt round-robin into folds
    one after another, so per-class and overall fold sizes differ by at most 1.
    """
    n = len(data)
    if folds < 2:
        raise DataError(f"need at least 2 folds, got {folds}")
    if folds > n:
        raise DataError(f"{folds} folds requested for {n} instances")
    rng = np.random.Generator(np.random.PCG64(seed))
    y = data.y
    assignment = np.empty(n, dtype=np.int64)
    position = 0
    for c in range(len(data.label_catalog)):
        members = np.flatnonzero(y == c)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        assignment[members] = (position + np.arange(members.size)) % folds
        position += members.size
    return assignment


def cross_validate(
    data: FeatureDataset,
    config: ClassifierConfig,
    folds: int = 10,
    seed: int = 0,
    assignment: np.ndarray | None = None,
) -> EvalReport:
    """Train on each fold's complement, test on the fold, and score the pooled matrix."""
    if assignment is None:
        assignment = stratified_kfold(data, folds, seed)
    present = data.classes_present()
    cm = ConfusionMatrix.zeros(data.label_catalog)
    for f in np.unique(assignment):
        test = assignment == f
        train_set = data.subset(~test)
        have = set(train_set.labels.tolist())
        for c in present:
            if c not in have:
                raise DataError(f"fold {int(f)}: training split has no instances of class {c!r}")
        model = train(train_set, config)
        predicted = model.predict_labels(data.matrix[test])
        for actual, pred in zip(data.labels[test], predicted):
            cm.add(actual, pred)
    report = metrics_from_matrix(cm)
    report.folds = assignment
    report.classifier = config.describe()
    report.feature_names = data.feature_names
    return report
