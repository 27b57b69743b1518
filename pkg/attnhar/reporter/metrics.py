"""Confusion-matrix accumulation and mean F1 scoring.

The mean F1 ``F_m`` is the unweighted mean of per-class F1 over *all* classes. A
support-weighted F1 is reported next to it. Undefined ratios (0/0) count as 0, so a class
absent from both the labels and the predictions scores an F1 of 0.

Example:
    >>> cm = ConfusionMatrix.empty(2)
    >>> for true, pred in [(0, 0), (1, 0), (1, 1)]:
    ...     cm = accumulate(cm, true, pred)
    >>> round(report(cm).accuracy, 3)
    0.667
"""

from dataclasses import dataclass
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np


@dataclass(eq=False)
class ConfusionMatrix:
    """``C x C`` counts; entry ``(i, j)`` counts windows of true class i predicted as j.

    Accumulation mutates in place (single writer); use :meth:`merge` to combine matrices
    accumulated independently.
    """

    counts: np.ndarray

    def __post_init__(self) -> None:
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValueError("confusion counts must be non-negative")

    @classmethod
    def empty(cls, n_classes: int) -> "ConfusionMatrix":
        if n_classes < 1:
            raise ValueError(f"n_classes must be positive, got {n_classes}")
        return cls(np.zeros((n_classes, n_classes), dtype=np.int64))

    @classmethod
    def from_pairs(
        cls, true_classes: Iterable[int], predicted: Iterable[int], n_classes: int
    ) -> "ConfusionMatrix":
        cm = cls.empty(n_classes)
        for true_class, predicted_class in zip(true_classes, predicted):
            cm.add(true_class, predicted_class)
        return cm

    @property
    def n_classes(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def add(self, true_class: int, predicted_class: int) -> "ConfusionMatrix":
        """Count one window.

        Raises:
            ValueError: If either class is outside ``[0, C)``.
        """
        for name, value in (("true_class", true_class), ("predicted_class", predicted_class)):
            if not 0 <= int(value) < self.n_classes:
                raise ValueError(f"{name} {value} outside [0, {self.n_classes})")
        self.counts[int(true_class), int(predicted_class)] += 1
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        """Entrywise sum of two matrices (new object)."""
        if other.n_classes != self.n_classes:
            raise ValueError(f"cannot merge {self.n_classes} and {other.n_classes} classes")
        return ConfusionMatrix(self.counts + other.counts)


def accumulate(cm: ConfusionMatrix, true_class: int, predicted_class: int) -> ConfusionMatrix:
    """Add one (true, predicted) pair to ``cm`` and return it."""
    return cm.add(true_class, predicted_class)


@dataclass(frozen=True)
class EvalReport:
    """Per-class and summary scores derived from a confusion matrix.

    Attributes:
        precision: Per-class precision (0 when nothing was predicted as the class).
        recall: Per-class recall (0 when the class has no support).
        f1: Per-class F1 (0 when precision + recall is 0).
        support: Number of windows of each true class.
        mean_f1: Unweighted mean of ``f1`` over all classes.
        weighted_f1: ``sum_i support_i / total * f1_i``.
        accuracy: Fraction of correctly classified windows.
        confusion: The confusion counts as nested lists.
        class_names: Optional display names.
    """

    precision: Tuple[float, ...]
    recall: Tuple[float, ...]
    f1: Tuple[float, ...]
    support: Tuple[int, ...]
    mean_f1: float
    weighted_f1: float
    accuracy: float
    confusion: Tuple[Tuple[int, ...], ...]
    class_names: Optional[Tuple[str, ...]] = None

    @property
    def n_classes(self) -> int:
        return len(self.f1)

    @property
    def total(self) -> int:
        return int(sum(self.support))

    def names(self) -> List[str]:
        if self.class_names:
            return list(self.class_names)
        return [str(i) for i in range(self.n_classes)]

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable form used by the JSON report."""
        return {
            "mean_f1": self.mean_f1,
            "weighted_f1": self.weighted_f1,
            "accuracy": self.accuracy,
            "total": self.total,
            "per_class": [
                {
                    "class": name,
                    "precision": self.precision[i],
                    "recall": self.recall[i],
                    "f1": self.f1[i],
                    "support": self.support[i],
                }
                for i, name in enumerate(self.names())
            ],
            "confusion": [list(row) for row in self.confusion],
        }


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


def report(cm: ConfusionMatrix, class_names: Optional[Sequence[str]] = None) -> EvalReport:
    """Score a confusion matrix.

    Raises:
        ValueError: If the matrix is empty or ``class_names`` has the wrong length.
    """
    if cm.total < 1:
        raise ValueError("cannot score an empty confusion matrix")
    if class_names is not None and len(class_names) != cm.n_classes:
        raise ValueError(f"expected {cm.n_classes} class names, got {len(class_names)}")

    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    support = counts.sum(axis=1)

    precision = _safe_ratio(tp, predicted)
    recall = _safe_ratio(tp, support)
    f1 = _safe_ratio(2.0 * precision * recall, precision + recall)
    total = counts.sum()

    return EvalReport(
        precision=tuple(float(v) for v in precision),
        recall=tuple(float(v) for v in recall),
        f1=tuple(float(v) for v in f1),
        support=tuple(int(v) for v in support),
        mean_f1=float(np.mean(f1)),
        weighted_f1=float(np.sum(support / total * f1)),
        accuracy=float(tp.sum() / total),
        confusion=tuple(tuple(int(v) for v in row) for row in cm.counts),
        class_names=tuple(class_names) if class_names is not None else None,
    )


def format_key_values(result: EvalReport, prefix: str = "") -> str:
    """Serialize a report to ``key=value`` tokens on one line."""
    tokens = []

    def add(key: str, value: object) -> None:
        tokens.append(f"{prefix}{key}={value}")

    add("mean_f1", f"{result.mean_f1:.6f}")
    add("weighted_f1", f"{result.weighted_f1:.6f}")
    add("accuracy", f"{result.accuracy:.6f}")
    add("total", result.total)
    for i, name in enumerate(result.names()):
        add(f"{name}_precision", f"{result.precision[i]:.6f}")
        add(f"{name}_recall", f"{result.recall[i]:.6f}")
        add(f"{name}_f1", f"{result.f1[i]:.6f}")
        add(f"{name}_support", result.support[i])

    return " ".join(tokens)
