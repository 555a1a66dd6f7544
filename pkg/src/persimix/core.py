"""Ordinal label algebra, series discretisation and sliding-window datasets.

Labels are plain integer ranks on an ordered scale ``1..Q``.  A raw
real-valued series is mapped onto that scale by :func:`discretize` using a
set of ascending cut points, and :func:`build_windows` turns an hourly
series into supervised patterns ``(z_t, y_{t+k})`` where ``z_t`` stacks the
exogenous features and one-hot encoded labels of the last ``delta + 1``
hours.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

# Aviation low-visibility category cut points, in metres.  Runway visual
# range uses four categories, cloud height three.
RUNWAY_VISUAL_RANGE_SCALE_M = (300.0, 550.0, 2000.0)
CLOUD_HEIGHT_SCALE_M = (200.0, 1500.0)


class InsufficientDataError(ValueError):
    """Raised when a dataset operation has no patterns to work with."""


@dataclass(frozen=True)
class OrdinalScale:
    """Ascending cut points splitting the real line into Q ordered classes.

    ``thresholds[q]`` is the left edge of class ``q + 2``: values in
    ``[thresholds[q-1], thresholds[q])`` map to rank ``q + 1``, every
    boundary value belonging to the upper class.
    """

    thresholds: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.thresholds) < 1:
            raise ValueError("at least one threshold required (Q >= 2)")
        for lo, hi in zip(self.thresholds, self.thresholds[1:]):
            if not lo < hi:
                raise ValueError(f"thresholds must be strictly ascending, got {self.thresholds}")
        if not all(math.isfinite(t) for t in self.thresholds):
            raise ValueError("thresholds must be finite")

    @property
    def num_classes(self) -> int:
        return len(self.thresholds) + 1

    @classmethod
    def identity(cls, num_classes: int) -> "OrdinalScale":
        """Scale whose classes are the integer ranks themselves.

        Cut points sit halfway between consecutive ranks, so discretizing a
        rank value returns that rank.  Used for series that come already
        labelled (e.g. synthetic data).
        """
        if num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        return cls(tuple(q + 0.5 for q in range(1, num_classes)))


def discretize(raw: float, scale: OrdinalScale) -> int:
    """Map a raw value to its 1-based rank; boundaries go to the upper class."""
    if not math.isfinite(raw):
        raise ValueError(f"cannot discretize non-finite value {raw!r}")
    rank = 1
    for cut in scale.thresholds:
        if raw >= cut:
            rank += 1
        else:
            break
    return rank


@dataclass(frozen=True)
class TimeSeriesRecord:
    """One hourly observation: exogenous features plus an ordinal label."""

    timestamp: int
    features: tuple[float, ...]
    label: int
    raw_value: float | None = None


@dataclass(frozen=True)
class WindowedPattern:
    z: np.ndarray
    current_label: int
    target: int
    origin_t: int


@dataclass(frozen=True)
class Standardization:
    """Per-feature z-score statistics; constant features carry std 0."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, raw: np.ndarray) -> np.ndarray:
        out = raw - self.mean
        nonconst = self.std > 0.0
        out[:, nonconst] /= self.std[nonconst]
        out[:, ~nonconst] = 0.0
        return out

    @classmethod
    def fit(cls, raw: np.ndarray) -> "Standardization":
        mean = raw.mean(axis=0)
        std = raw.std(axis=0)
        std = np.where(std > 1e-12, std, 0.0)
        return cls(mean=mean, std=std)


class WindowedDataset:
    """Array-backed collection of windowed patterns sharing one scale.

    ``z`` holds one standardized pattern per row; ``current`` and
    ``targets`` hold 1-based ranks.  Instances are immutable after
    construction and safe to share across threads.
    """

    def __init__(
        self,
        z: np.ndarray,
        current: np.ndarray,
        targets: np.ndarray,
        origins: np.ndarray,
        scale: OrdinalScale,
        delta: int,
        horizon: int,
        standardization: Standardization,
    ) -> None:
        self.z = np.ascontiguousarray(z, dtype=np.float64)
        self.current = np.asarray(current, dtype=np.int64)
        self.targets = np.asarray(targets, dtype=np.int64)
        self.origins = np.asarray(origins, dtype=np.int64)
        self.scale = scale
        self.delta = delta
        self.horizon = horizon
        self.standardization = standardization
        for arr in (self.z, self.current, self.targets, self.origins):
            arr.setflags(write=False)
        self._z1: np.ndarray | None = None

    @property
    def num_classes(self) -> int:
        return self.scale.num_classes

    @property
    def input_dim(self) -> int:
        return self.z.shape[1]

    @property
    def z_with_bias(self) -> np.ndarray:
        """Pattern matrix with a leading column of ones, cached."""
        if self._z1 is None:
            z1 = np.column_stack([np.ones(len(self)), self.z])
            z1.setflags(write=False)
            self._z1 = z1
        return self._z1

    def __len__(self) -> int:
        return self.z.shape[0]

    def pattern(self, i: int) -> WindowedPattern:
        return WindowedPattern(
            z=self.z[i],
            current_label=int(self.current[i]),
            target=int(self.targets[i]),
            origin_t=int(self.origins[i]),
        )

    def __iter__(self) -> Iterator[WindowedPattern]:
        return (self.pattern(i) for i in range(len(self)))

    def subset(self, indices: np.ndarray) -> "WindowedDataset":
        idx = np.asarray(indices)
        return WindowedDataset(
            self.z[idx],
            self.current[idx],
            self.targets[idx],
            self.origins[idx],
            self.scale,
            self.delta,
            self.horizon,
            self.standardization,
        )


def raw_windows(
    series: Sequence[TimeSeriesRecord], delta: int, horizon: int, num_classes: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Build unstandardized windows from one series.

    A pattern is emitted for every origin hour ``t`` whose ``delta + 1``
    trailing hours and the hour ``t + horizon`` are all present; any gap
    suppresses the window.  Returns ``(z_raw, current, targets, origins)``.
    """
    if delta < 0:
        raise ValueError("delta must be >= 0")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if not series:
        raise InsufficientDataError("empty series")

    feat_dim = len(series[0].features)
    by_hour: dict[int, TimeSeriesRecord] = {}
    prev_t = None
    for rec in series:
        if prev_t is not None and rec.timestamp <= prev_t:
            raise ValueError(f"timestamps must be strictly increasing, got {rec.timestamp} after {prev_t}")
        if len(rec.features) != feat_dim:
            raise ValueError("feature dimensionality must be constant across a series")
        if not 1 <= rec.label <= num_classes:
            raise ValueError(f"label {rec.label} outside 1..{num_classes}")
        by_hour[rec.timestamp] = rec
        prev_t = rec.timestamp

    width = (delta + 1) * (feat_dim + num_classes)
    rows: list[np.ndarray] = []
    current: list[int] = []
    targets: list[int] = []
    origins: list[int] = []
    for rec in series:
        t = rec.timestamp
        if t + horizon not in by_hour:
            continue
        steps = [by_hour.get(t - delta + j) for j in range(delta + 1)]
        if any(s is None for s in steps):
            continue
        z = np.empty(width)
        pos = 0
        for step in steps:
            z[pos : pos + feat_dim] = step.features
            pos += feat_dim
            onehot = np.zeros(num_classes)
            onehot[step.label - 1] = 1.0
            z[pos : pos + num_classes] = onehot
            pos += num_classes
        rows.append(z)
        current.append(rec.label)
        targets.append(by_hour[t + horizon].label)
        origins.append(t)

    if not rows:
        raise InsufficientDataError(
            f"no contiguous window of {delta + 1} hours plus horizon {horizon} found"
        )
    return (
        np.asarray(rows),
        np.asarray(current, dtype=np.int64),
        np.asarray(targets, dtype=np.int64),
        np.asarray(origins, dtype=np.int64),
    )


def build_windows(
    series: Sequence[TimeSeriesRecord],
    delta: int,
    horizon: int,
    scale: OrdinalScale,
    standardization: Standardization | None = None,
) -> WindowedDataset:
    """Windowed dataset from a series; see :func:`raw_windows` for gap rules.

    When ``standardization`` is omitted the statistics are fitted on the
    windows being built (training use); pass the training statistics when
    building evaluation windows.
    """
    z_raw, current, targets, origins = raw_windows(series, delta, horizon, scale.num_classes)
    if standardization is None:
        standardization = Standardization.fit(z_raw)
    z = standardization.apply(z_raw)
    return WindowedDataset(z, current, targets, origins, scale, delta, horizon, standardization)


def class_distribution(ds: WindowedDataset) -> np.ndarray:
    """Counts of target ranks per class, length Q."""
    return np.bincount(ds.targets, minlength=ds.num_classes + 1)[1:]


def persistence_rate(ds: WindowedDataset) -> float:
    """Fraction of patterns whose target equals the current label."""
    return int(np.sum(ds.targets == ds.current)) / len(ds)
