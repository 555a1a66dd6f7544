"""Training regimes, nested cross-validation and the experiment protocol.

Six methods share one harness: the persistence baseline, the linear and
network ordinal models (POM, NNPOM), the independently trained mixture
(ITME: gate from a binary switch/no-switch problem, expert from the
switching patterns only) and the jointly trained mixtures without and with
class costs (STME, STMEIC).  Hyperparameters come from a grid searched by
k-fold cross-validation on contiguous temporal blocks; stochastic methods
are refit ``repeats`` times from seeds ``seed + 0 .. seed + repeats - 1``.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import metrics, mixture, nnpom, optimizer
from .core import (
    InsufficientDataError,
    OrdinalScale,
    Standardization,
    TimeSeriesRecord,
    WindowedDataset,
    raw_windows,
)

METHODS = ("Persist", "POM", "NNPOM", "ITME", "STME", "STMEIC")
SELECTION_METRICS = ("amae", "mmae", "acc", "gms")
# Metrics where smaller is better; the others are maximised.
_ERROR_LIKE = frozenset({"amae", "mmae"})


@dataclass(frozen=True)
class HyperGrid:
    hidden_units: tuple[int, ...] = (5, 10, 25, 50, 75)
    iterations: tuple[int, ...] = (100, 250, 500, 1000)
    l2: tuple[float, ...] = (0.0, 0.001)

    def __post_init__(self) -> None:
        if not (self.hidden_units and self.iterations and self.l2):
            raise ValueError("grid axes must be non-empty")


@dataclass(frozen=True)
class TrainSpec:
    method: str
    grid: HyperGrid = HyperGrid()
    repeats: int = 10
    seed: int = 0
    cv_folds: int = 5
    selection_metric: str = "amae"

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be >= 2")
        if self.selection_metric not in SELECTION_METRICS:
            raise ValueError(f"unknown selection metric {self.selection_metric!r}")


def _mix_seed(*parts: int) -> int:
    """Deterministic integer mixing for derived rng seeds."""
    h = 0
    for part in parts:
        h = (h * 1_000_003 + int(part) + 0x9E3779B9) % (1 << 63)
    return h


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


@dataclass
class FittedModel:
    """A trained predictor plus everything needed to reapply it.

    ``params`` is ``None`` for the persistence baseline, a
    :class:`~persimix.nnpom.PomParams` / :class:`~persimix.nnpom.NnpomParams`
    for the standalone ordinal models, and a
    :class:`~persimix.mixture.MixtureParams` for the gated mixtures.
    """

    method: str
    params: object | None = None
    scale: OrdinalScale | None = None
    delta: int | None = None
    horizon: int | None = None
    standardization: Standardization | None = None
    chosen: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int | None:
        return self.scale.num_classes if self.scale is not None else None

    def predict_dataset(self, ds: WindowedDataset) -> np.ndarray:
        """1-based predicted ranks for every pattern."""
        if self.method == "Persist":
            return ds.current.copy()
        if self.method == "POM":
            probs = nnpom.pom_class_probs_batch(ds.z_with_bias, self.params)
        elif self.method == "NNPOM":
            probs = nnpom.class_probs_batch(ds.z_with_bias, self.params)
        else:
            return mixture.predict_batch(ds, self.params)
        return np.argmax(probs, axis=1) + 1

    def predict_pattern(self, pattern) -> int:
        if self.method == "Persist":
            return pattern.current_label
        if self.method == "POM":
            return int(np.argmax(nnpom.pom_class_probs(pattern.z, self.params))) + 1
        if self.method == "NNPOM":
            return int(np.argmax(nnpom.class_probs(pattern.z, self.params))) + 1
        return mixture.predict(pattern, self.params)

    def probabilities(self, ds: WindowedDataset) -> np.ndarray:
        """(N, Q) class probabilities; persistence yields one-hot rows."""
        if self.method == "Persist":
            out = np.zeros((len(ds), ds.num_classes))
            out[np.arange(len(ds)), ds.current - 1] = 1.0
            return out
        if self.method == "POM":
            return nnpom.pom_class_probs_batch(ds.z_with_bias, self.params)
        if self.method == "NNPOM":
            return nnpom.class_probs_batch(ds.z_with_bias, self.params)
        return mixture.mixture_probs_batch(ds, self.params)

    def gate_values(self, ds: WindowedDataset) -> np.ndarray | None:
        """Gate activations, or None for methods without a gate."""
        if self.method in ("ITME", "STME", "STMEIC"):
            return mixture.gate_batch(ds, self.params)
        return None


def _trace_summary(result: optimizer.MinimizeResult) -> dict:
    return {
        "initial_loss": float(result.trace[0]),
        "best_loss": result.best_loss,
        "best_iteration": result.best_iteration,
        "iterations": len(result.trace) - 1,
    }


# ---------------------------------------------------------------------------
# Single-configuration fitters
# ---------------------------------------------------------------------------


def problematic_mask(ds: WindowedDataset) -> np.ndarray:
    """Patterns where persistence fails: target differs from current label."""
    return ds.targets != ds.current


def _fit_pom(train: WindowedDataset, iterations: int, seed: int):
    init = nnpom.init_pom_params(train.input_dim, train.num_classes, seed)
    z1 = train.z_with_bias
    tgt = np.ascontiguousarray(train.targets - 1)
    weights = np.ones(train.num_classes)

    def objective(vec):
        return nnpom.pom_loss_grad(z1, tgt, vec, train.num_classes, weights, 0.0)

    result = optimizer.minimize(objective, init.to_vector(), iterations)
    return nnpom.PomParams.from_vector(train.input_dim, train.num_classes, result.params), result


def _fit_expert(train: WindowedDataset, hidden_units: int, iterations: int, l2: float, seed: int):
    cfg = nnpom.NnpomConfig(train.input_dim, hidden_units, train.num_classes)
    init = nnpom.init_params(cfg, seed)
    loss_cfg = mixture.LossConfig.for_dataset(train, weighted=False, lam=l2)
    objective = mixture.make_objective(train, cfg, loss_cfg, has_gate=False)
    result = optimizer.minimize(objective, init.to_vector(), iterations)
    return nnpom.NnpomParams.from_vector(cfg, result.params), result


def _fit_gate(train: WindowedDataset, labels01: np.ndarray, iterations: int, seed: int) -> np.ndarray:
    """Logistic regression by iRprop+ on binary cross-entropy."""
    z1 = train.z_with_bias
    n = len(train)
    rng = np.random.default_rng(seed)
    init = rng.uniform(-0.1, 0.1, size=z1.shape[1])

    def objective(vec):
        act = nnpom.sigmoid(z1 @ vec)
        act_c = np.clip(act, nnpom.PROB_FLOOR, 1.0 - nnpom.PROB_FLOOR)
        value = -np.sum(labels01 * np.log(act_c) + (1.0 - labels01) * np.log(1.0 - act_c)) / n
        grad = z1.T @ (act - labels01) / n
        return float(value), grad

    return optimizer.minimize(objective, init, iterations).params


def _fit_itme(train: WindowedDataset, hidden_units: int, iterations: int, l2: float, seed: int):
    wrong = problematic_mask(train)
    if not wrong.any():
        raise InsufficientDataError(
            "persistence never fails on this training set; the expert has nothing to learn"
        )
    stays = (~wrong).astype(np.float64)
    nu = _fit_gate(train, stays, iterations, seed)

    switches = train.subset(np.nonzero(wrong)[0])
    present = np.unique(switches.targets)
    if len(present) < train.num_classes:
        absent = sorted(set(range(1, train.num_classes + 1)) - set(present.tolist()))
        warnings.warn(
            f"problematic patterns lack classes {absent}; expert trained on present classes only",
            stacklevel=2,
        )
    expert, result = _fit_expert(switches, hidden_units, iterations, l2, _mix_seed(seed, 1))
    return mixture.MixtureParams(gate_weights=nu, expert=expert), result


def _fit_joint(
    train: WindowedDataset, hidden_units: int, iterations: int, l2: float, weighted: bool, seed: int
):
    cfg = nnpom.NnpomConfig(train.input_dim, hidden_units, train.num_classes)
    init = mixture.init_mixture_params(cfg, seed)
    loss_cfg = mixture.LossConfig.for_dataset(train, weighted=weighted, lam=l2)
    objective = mixture.make_objective(train, cfg, loss_cfg, has_gate=True)
    result = optimizer.minimize(objective, init.to_vector(), iterations)
    return mixture.MixtureParams.from_vector(cfg, result.params), result


def _fit_params(train: WindowedDataset, method: str, point: dict, seed: int):
    if method == "Persist":
        return None, None
    if method == "POM":
        return _fit_pom(train, point["iterations"], seed)
    if method == "NNPOM":
        return _fit_expert(train, point["hidden_units"], point["iterations"], point["l2"], seed)
    if method == "ITME":
        return _fit_itme(train, point["hidden_units"], point["iterations"], point["l2"], seed)
    if method in ("STME", "STMEIC"):
        return _fit_joint(
            train,
            point["hidden_units"],
            point["iterations"],
            point["l2"],
            weighted=(method == "STMEIC"),
            seed=seed,
        )
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Model selection and public training entry points
# ---------------------------------------------------------------------------


def _grid_points(method: str, grid: HyperGrid) -> list[dict]:
    """Grid in tie-break order: smaller M, then fewer iterations, then larger l2."""
    if method == "Persist":
        return [{}]
    if method == "POM":
        return [{"iterations": it} for it in sorted(grid.iterations)]
    return [
        {"hidden_units": m, "iterations": it, "l2": l2}
        for m in sorted(grid.hidden_units)
        for it in sorted(grid.iterations)
        for l2 in sorted(grid.l2, reverse=True)
    ]


def _fold_indices(n: int, folds: int) -> list[np.ndarray]:
    return np.array_split(np.arange(n), folds)


def cross_validate(train: WindowedDataset, spec: TrainSpec, threads: int = 1) -> dict:
    """Pick a grid point by mean validation metric over contiguous folds.

    Single-point grids are returned directly.  Folds missing a class are
    scored over the present classes (the evaluation flags them).
    """
    points = _grid_points(spec.method, spec.grid)
    if len(points) == 1:
        return points[0]
    if len(train) < spec.cv_folds:
        raise InsufficientDataError(f"{len(train)} patterns cannot fill {spec.cv_folds} folds")

    folds = _fold_indices(len(train), spec.cv_folds)
    all_idx = np.arange(len(train))
    tasks = []
    for gi, point in enumerate(points):
        for fi, val_idx in enumerate(folds):
            tasks.append((gi, fi, point, val_idx))

    def run(task):
        gi, fi, point, val_idx = task
        train_idx = np.setdiff1d(all_idx, val_idx)
        assert not np.intersect1d(train_idx, val_idx).size, "fold leaked into its training data"
        fold_train = train.subset(train_idx)
        fold_val = train.subset(val_idx)
        params, _ = _fit_params(fold_train, spec.method, point, _mix_seed(spec.seed, 17, gi, fi))
        model = FittedModel(method=spec.method, params=params, scale=train.scale)
        report = metrics.evaluate(fold_val.targets, model.predict_dataset(fold_val), train.num_classes)
        return gi, fi, getattr(report, spec.selection_metric)

    scores = np.full((len(points), len(folds)), np.nan)
    for gi, fi, value in _map(run, tasks, threads):
        scores[gi, fi] = value

    mean_scores = scores.mean(axis=1)
    if spec.selection_metric not in _ERROR_LIKE:
        mean_scores = -mean_scores
    best = int(np.argmin(mean_scores))  # first minimum respects the tie-break order
    return points[best]


def fit_final(train: WindowedDataset, spec: TrainSpec, chosen: dict, seed: int) -> FittedModel:
    """One (stochastic) fit on the full training split with fixed hyperparameters."""
    params, result = _fit_params(train, spec.method, chosen, seed)
    meta = {"seed": seed}
    if result is not None:
        meta["trace"] = _trace_summary(result)
    return FittedModel(
        method=spec.method,
        params=params,
        scale=train.scale,
        delta=train.delta,
        horizon=train.horizon,
        standardization=train.standardization,
        chosen=dict(chosen),
        meta=meta,
    )


def train_persist(train: WindowedDataset | None = None) -> FittedModel:
    """Parameterless baseline predicting the current label for t + k."""
    if train is None:
        return FittedModel(method="Persist")
    return fit_final(train, TrainSpec(method="Persist"), {}, seed=0)


def train_itme(train: WindowedDataset, spec: TrainSpec, threads: int = 1) -> FittedModel:
    """Independent training: gate on switch/no-switch, expert on switches."""
    chosen = cross_validate(train, spec, threads)
    return fit_final(train, spec, chosen, spec.seed)


def train_stme(train: WindowedDataset, spec: TrainSpec, weighted: bool, threads: int = 1) -> FittedModel:
    """Joint training of gate and expert; ``weighted`` adds class costs."""
    if spec.method not in ("STME", "STMEIC"):
        raise ValueError("train_stme expects an STME or STMEIC spec")
    if weighted != (spec.method == "STMEIC"):
        raise ValueError("weighted flag disagrees with spec.method")
    chosen = cross_validate(train, spec, threads)
    return fit_final(train, spec, chosen, spec.seed)


def fit_method(train: WindowedDataset, spec: TrainSpec, threads: int = 1) -> FittedModel:
    """Cross-validate and fit any of the six methods."""
    chosen = cross_validate(train, spec, threads)
    return fit_final(train, spec, chosen, spec.seed)


def evaluate_model(model: FittedModel, ds: WindowedDataset) -> metrics.EvalReport:
    return metrics.evaluate(ds.targets, model.predict_dataset(ds), ds.num_classes)


# ---------------------------------------------------------------------------
# Experiment protocol
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentRow:
    method: str
    split: int
    repeat: int
    chosen: dict
    report: metrics.EvalReport


HEADLINE_METRICS = ("acc", "amae", "mmae", "gms")


@dataclass
class ExperimentResult:
    rows: list[ExperimentRow]

    @property
    def methods(self) -> list[str]:
        seen: list[str] = []
        for row in self.rows:
            if row.method not in seen:
                seen.append(row.method)
        return seen

    @property
    def splits(self) -> list[int]:
        return sorted({row.split for row in self.rows})

    def split_stats(self, method: str, split: int) -> dict[str, tuple[float, float]]:
        """Per-metric (mean, std) over the repeats of one split."""
        values = {
            name: np.array([getattr(r.report, name) for r in self.rows if r.method == method and r.split == split])
            for name in HEADLINE_METRICS
        }
        if not next(iter(values.values())).size:
            raise KeyError(f"no rows for method {method} split {split}")
        return {name: (float(v.mean()), float(v.std())) for name, v in values.items()}

    def aggregate(self, method: str) -> dict[str, float]:
        """Cross-split mean of the per-split repeat means."""
        out = {}
        for name in HEADLINE_METRICS:
            per_split = [self.split_stats(method, s)[name][0] for s in self.splits]
            out[name] = float(np.mean(per_split))
        return out

    def extend(self, other: "ExperimentResult") -> None:
        self.rows.extend(other.rows)


def run_experiment(
    splits: Sequence[tuple[WindowedDataset, WindowedDataset]],
    spec: TrainSpec,
    threads: int = 1,
) -> ExperimentResult:
    """Full protocol for one method over train/test splits.

    Hyperparameters are selected once per split; the final model is then
    refit ``spec.repeats`` times from consecutive seeds and evaluated on
    the held-out data.
    """
    if not splits:
        raise ValueError("need at least one (train, test) split")
    rows: list[ExperimentRow] = []
    for si, (train, test) in enumerate(splits):
        chosen = cross_validate(train, spec, threads)

        def run_repeat(r: int) -> ExperimentRow:
            model = fit_final(train, spec, chosen, spec.seed + r)
            return ExperimentRow(spec.method, si, r, dict(chosen), evaluate_model(model, test))

        rows.extend(_map(run_repeat, range(spec.repeats), threads))
    return ExperimentResult(rows)


def make_winter_splits(
    records: Sequence[TimeSeriesRecord],
    num_splits: int,
    delta: int,
    horizon: int,
    scale: OrdinalScale,
) -> list[tuple[WindowedDataset, WindowedDataset]]:
    """Leave-one-segment-out splits over contiguous series segments.

    The series is cut into ``num_splits`` consecutive segments; each in
    turn becomes the test set while windows from the remaining segments
    form the training set.  Windows never span segment boundaries, and
    test features are standardized with the training statistics.
    """
    if num_splits < 2:
        raise ValueError("num_splits must be >= 2")
    segments = [list(seg) for seg in np.array_split(np.asarray(records, dtype=object), num_splits)]
    q = scale.num_classes
    splits = []
    for test_i in range(num_splits):
        train_parts = [raw_windows(seg, delta, horizon, q) for i, seg in enumerate(segments) if i != test_i]
        z_raw = np.vstack([p[0] for p in train_parts])
        current = np.concatenate([p[1] for p in train_parts])
        targets = np.concatenate([p[2] for p in train_parts])
        origins = np.concatenate([p[3] for p in train_parts])
        stats = Standardization.fit(z_raw)
        train_ds = WindowedDataset(
            stats.apply(z_raw), current, targets, origins, scale, delta, horizon, stats
        )
        tz, tc, tt, to = raw_windows(segments[test_i], delta, horizon, q)
        test_ds = WindowedDataset(stats.apply(tz), tc, tt, to, scale, delta, horizon, stats)
        splits.append((train_ds, test_ds))
    return splits
