"""Ordinal and imbalance-aware evaluation metrics.

Four headline numbers: accuracy and the geometric mean of per-class
sensitivities (both percentages), and the average / maximum over classes of
the per-class mean absolute rank error (AMAE / MMAE, both in ``[0, Q-1]``).
Classes absent from the true labels are excluded from the averages and
recorded on the report rather than producing 0/0.

Everything exists twice on purpose: :func:`evaluate` works directly from
label sequences, while :class:`ConfusionMatrix` derives the same numbers
from tabulated counts, serving as an oracle for the streaming path.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _as_labels(values, num_classes: int | None = None) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError("label sequences must be one-dimensional")
    if num_classes is not None and arr.size and (arr.min() < 1 or arr.max() > num_classes):
        raise ValueError(f"labels must lie in 1..{num_classes}")
    return arr


def accuracy(true, pred) -> float:
    """Percentage of exact matches."""
    t, p = _as_labels(true), _as_labels(pred)
    if t.size == 0 or t.size != p.size:
        raise ValueError("need equal-length non-empty label sequences")
    return 100.0 * (int(np.sum(t == p)) / t.size)


def per_class_mae(true, pred, num_classes: int) -> np.ndarray:
    """Mean absolute rank error per true class; NaN for absent classes."""
    t, p = _as_labels(true, num_classes), _as_labels(pred, num_classes)
    out = np.full(num_classes, np.nan)
    for q in range(1, num_classes + 1):
        mask = t == q
        if mask.any():
            out[q - 1] = int(np.sum(np.abs(t[mask] - p[mask]))) / int(mask.sum())
    return out


def amae(true, pred, num_classes: int) -> float:
    """Average of per-class MAE over the classes present."""
    mae = per_class_mae(true, pred, num_classes)
    present = ~np.isnan(mae)
    if not present.any():
        raise ValueError("no class present in true labels")
    return float(np.sum(mae[present]) / int(present.sum()))


def mmae(true, pred, num_classes: int) -> float:
    """Maximum of per-class MAE over the classes present."""
    mae = per_class_mae(true, pred, num_classes)
    present = ~np.isnan(mae)
    if not present.any():
        raise ValueError("no class present in true labels")
    return float(np.max(mae[present]))


def sensitivities(true, pred, num_classes: int) -> np.ndarray:
    """Per-class recall percentages; NaN for absent classes."""
    t, p = _as_labels(true, num_classes), _as_labels(pred, num_classes)
    out = np.full(num_classes, np.nan)
    for q in range(1, num_classes + 1):
        mask = t == q
        if mask.any():
            out[q - 1] = 100.0 * (int(np.sum(p[mask] == q)) / int(mask.sum()))
    return out


def _gms_from_sensitivities(sens: np.ndarray) -> float:
    present = sens[~np.isnan(sens)]
    if present.size == 0:
        raise ValueError("no class present in true labels")
    if np.any(present == 0.0):
        return 0.0
    prod = 1.0
    for value in present:
        prod *= value
    return float(prod ** (1.0 / present.size))


def gms(true, pred, num_classes: int) -> float:
    """Geometric mean of sensitivities; exactly 0 if any class has none."""
    return _gms_from_sensitivities(sensitivities(true, pred, num_classes))


@dataclass(frozen=True)
class EvalReport:
    """Headline metrics plus the per-class detail behind them."""

    acc: float
    amae: float
    mmae: float
    gms: float
    per_class_mae: np.ndarray
    per_class_sensitivity: np.ndarray
    n_per_class: np.ndarray
    missing_classes: tuple[int, ...] = field(default=())

    @property
    def num_classes(self) -> int:
        return len(self.n_per_class)


def evaluate(true, pred, num_classes: int) -> EvalReport:
    """Single-pass evaluation from label sequences."""
    t, p = _as_labels(true, num_classes), _as_labels(pred, num_classes)
    if t.size == 0 or t.size != p.size:
        raise ValueError("need equal-length non-empty label sequences")
    counts = np.bincount(t, minlength=num_classes + 1)[1:]
    mae = per_class_mae(t, p, num_classes)
    sens = sensitivities(t, p, num_classes)
    present = counts > 0
    missing = tuple(int(q + 1) for q in np.nonzero(~present)[0])
    return EvalReport(
        acc=accuracy(t, p),
        amae=float(np.sum(mae[present]) / int(present.sum())),
        mmae=float(np.max(mae[present])),
        gms=_gms_from_sensitivities(sens),
        per_class_mae=mae,
        per_class_sensitivity=sens,
        n_per_class=counts,
        missing_classes=missing,
    )


@dataclass(frozen=True)
class ConfusionMatrix:
    """Count matrix with true classes on rows, predictions on columns."""

    counts: np.ndarray

    def __post_init__(self) -> None:
        c = self.counts
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(c < 0):
            raise ValueError("confusion matrix counts must be non-negative")

    @classmethod
    def from_labels(cls, true, pred, num_classes: int) -> "ConfusionMatrix":
        t, p = _as_labels(true, num_classes), _as_labels(pred, num_classes)
        if t.size != p.size:
            raise ValueError("label sequences differ in length")
        counts = np.zeros((num_classes, num_classes), dtype=np.int64)
        np.add.at(counts, (t - 1, p - 1), 1)
        return cls(counts)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def accuracy(self) -> float:
        return 100.0 * (int(np.trace(self.counts)) / self.total)

    def per_class_mae(self) -> np.ndarray:
        q = self.num_classes
        dist = np.abs(np.arange(q)[:, None] - np.arange(q)[None, :])
        totals = self.row_totals()
        out = np.full(q, np.nan)
        for row in range(q):
            if totals[row] > 0:
                out[row] = int(np.sum(self.counts[row] * dist[row])) / int(totals[row])
        return out

    def amae(self) -> float:
        mae = self.per_class_mae()
        present = ~np.isnan(mae)
        return float(np.sum(mae[present]) / int(present.sum()))

    def mmae(self) -> float:
        mae = self.per_class_mae()
        return float(np.max(mae[~np.isnan(mae)]))

    def sensitivities(self) -> np.ndarray:
        totals = self.row_totals()
        out = np.full(self.num_classes, np.nan)
        for row in range(self.num_classes):
            if totals[row] > 0:
                out[row] = 100.0 * (int(self.counts[row, row]) / int(totals[row]))
        return out

    def gms(self) -> float:
        return _gms_from_sensitivities(self.sensitivities())
