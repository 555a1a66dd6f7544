"""CSV and JSON persistence: series, reports, models, run configuration.

Series files carry a mandatory header ``timestamp, <feature columns...>,
label`` (or ``raw_value`` as the last column, in which case an ordinal
scale must be supplied on read).  Floats are emitted with 17 significant
digits so every round trip is bit-faithful.  All writers go through a
write-then-rename so output files appear atomically.
"""
from __future__ import annotations

import csv
import json
import math
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .core import OrdinalScale, Standardization, TimeSeriesRecord, discretize
from .metrics import EvalReport
from .mixture import MixtureParams
from .nnpom import NnpomConfig, NnpomParams, PomParams
from .training import ExperimentResult, FittedModel, HyperGrid, TrainSpec


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


@contextmanager
def _atomic(path: str | Path) -> Iterator:
    """Open a temp file next to ``path`` and rename it into place on success."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        with open(tmp, "w", newline="") as handle:
            yield handle
        os.replace(tmp, path)
    finally:
        tmp.unlink(missing_ok=True)


# ---------------------------------------------------------------------------
# Series
# ---------------------------------------------------------------------------


def read_series(path: str | Path, scale: OrdinalScale | None = None) -> list[TimeSeriesRecord]:
    """Parse a series CSV; raw values are discretized with ``scale``."""
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, header row is mandatory") from None
        if len(header) < 2 or header[0] != "timestamp":
            raise ValueError(f"{path}: header must start with 'timestamp'")
        value_col = header[-1]
        if value_col not in ("label", "raw_value"):
            raise ValueError(f"{path}: last column must be 'label' or 'raw_value', got {value_col!r}")
        if value_col == "raw_value" and scale is None:
            raise ValueError(f"{path}: raw_value column requires an ordinal scale")
        n_features = len(header) - 2

        records: list[TimeSeriesRecord] = []
        prev_t: int | None = None
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                t = int(row[0])
                features = tuple(float(v) for v in row[1 : 1 + n_features])
                value = float(row[-1])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if prev_t is not None and t <= prev_t:
                raise ValueError(f"{path}:{lineno}: timestamp {t} not greater than previous {prev_t}")
            prev_t = t
            if value_col == "label":
                if not value.is_integer():
                    raise ValueError(f"{path}:{lineno}: label {value} is not an integer rank")
                records.append(TimeSeriesRecord(timestamp=t, features=features, label=int(value)))
            else:
                records.append(
                    TimeSeriesRecord(
                        timestamp=t, features=features, label=discretize(value, scale), raw_value=value
                    )
                )
        return records


def write_series(
    records: Sequence[TimeSeriesRecord],
    path: str | Path,
    feature_names: Sequence[str] | None = None,
    write_raw: bool = False,
) -> None:
    """Emit records in the schema :func:`read_series` accepts."""
    n_features = len(records[0].features) if records else 0
    if feature_names is None:
        feature_names = [f"f{i}" for i in range(n_features)]
    if len(feature_names) != n_features:
        raise ValueError("feature_names length mismatch")
    with _atomic(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(["timestamp", *feature_names, "raw_value" if write_raw else "label"])
        for rec in records:
            tail = fmt(rec.raw_value) if write_raw else rec.label
            writer.writerow([rec.timestamp, *(fmt(v) for v in rec.features), tail])


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _report_header(num_classes: int) -> list[str]:
    per_class = [f"mae_{q}" for q in range(1, num_classes + 1)]
    per_class += [f"sens_{q}" for q in range(1, num_classes + 1)]
    per_class += [f"n_{q}" for q in range(1, num_classes + 1)]
    return ["method", "split", "repeat", "acc", "amae", "mmae", "gms", *per_class]


def _report_cells(report: EvalReport) -> list[str]:
    cells = [fmt(report.acc), fmt(report.amae), fmt(report.mmae), fmt(report.gms)]
    cells += [fmt(v) for v in report.per_class_mae]
    cells += [fmt(v) for v in report.per_class_sensitivity]
    cells += [str(int(v)) for v in report.n_per_class]
    return cells


def write_report(result: ExperimentResult, path: str | Path) -> None:
    """Detail row per (method, split, repeat), then one aggregate per method."""
    with _atomic(path) as handle:
        writer = csv.writer(handle)
        if not result.rows:
            writer.writerow(["method", "split", "repeat", "acc", "amae", "mmae", "gms"])
            return
        q = result.rows[0].report.num_classes
        writer.writerow(_report_header(q))
        for row in result.rows:
            writer.writerow([row.method, row.split, row.repeat, *_report_cells(row.report)])
        for method in result.methods:
            agg = result.aggregate(method)
            reports = [r.report for r in result.rows if r.method == method]
            with np.errstate(all="ignore"):
                mae = np.nanmean(np.array([r.per_class_mae for r in reports]), axis=0)
                sens = np.nanmean(np.array([r.per_class_sensitivity for r in reports]), axis=0)
            n_mean = np.array([r.n_per_class for r in reports]).mean(axis=0)
            cells = [fmt(agg[k]) for k in ("acc", "amae", "mmae", "gms")]
            cells += [fmt(v) for v in mae] + [fmt(v) for v in sens] + [fmt(v) for v in n_mean]
            writer.writerow([method, "all", "mean", *cells])


def read_report(path: str | Path) -> list[dict]:
    """Rows of a report CSV with numeric fields parsed back to floats."""
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        rows = []
        for raw in reader:
            row: dict = {}
            for key, value in raw.items():
                if key in ("method", "split", "repeat"):
                    row[key] = value
                else:
                    row[key] = float(value)
            rows.append(row)
        return rows


def render_table(result: ExperimentResult) -> str:
    """Comparison table: one method per row, Acc / AMAE / MMAE / GM columns."""
    lines = []
    header = f"{'Method':<10}{'Acc':>16}{'AMAE':>16}{'MMAE':>16}{'GM':>16}"
    for split in result.splits:
        lines.append(f"Split {split}")
        lines.append(header)
        for method in result.methods:
            stats = result.split_stats(method, split)
            cells = "".join(
                f"{stats[k][0]:>9.4f}±{stats[k][1]:<6.4f}" for k in ("acc", "amae", "mmae", "gms")
            )
            lines.append(f"{method:<10}{cells}")
        lines.append("")
    lines.append("Cross-split mean")
    lines.append(header)
    for method in result.methods:
        agg = result.aggregate(method)
        cells = "".join(f"{agg[k]:>16.4f}" for k in ("acc", "amae", "mmae", "gms"))
        lines.append(f"{method:<10}{cells}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Model records
# ---------------------------------------------------------------------------


def _params_payload(model: FittedModel) -> dict | None:
    params = model.params
    if params is None:
        return None
    if isinstance(params, MixtureParams):
        cfg = params.config
        return {
            "kind": "mixture",
            "hidden_units": cfg.hidden_units,
            "input_dim": cfg.input_dim,
            "num_classes": cfg.num_classes,
            "values": [float(v) for v in params.to_vector()],
        }
    if isinstance(params, NnpomParams):
        cfg = params.config
        return {
            "kind": "nnpom",
            "hidden_units": cfg.hidden_units,
            "input_dim": cfg.input_dim,
            "num_classes": cfg.num_classes,
            "values": [float(v) for v in params.to_vector()],
        }
    if isinstance(params, PomParams):
        return {
            "kind": "pom",
            "input_dim": params.input_dim,
            "num_classes": params.num_classes,
            "values": [float(v) for v in params.to_vector()],
        }
    raise TypeError(f"cannot serialize parameters of type {type(params)!r}")


def _params_from_payload(payload: dict | None):
    if payload is None:
        return None
    values = np.asarray(payload["values"], dtype=np.float64)
    if payload["kind"] == "mixture":
        cfg = NnpomConfig(payload["input_dim"], payload["hidden_units"], payload["num_classes"])
        return MixtureParams.from_vector(cfg, values)
    if payload["kind"] == "nnpom":
        cfg = NnpomConfig(payload["input_dim"], payload["hidden_units"], payload["num_classes"])
        return NnpomParams.from_vector(cfg, values)
    if payload["kind"] == "pom":
        return PomParams.from_vector(payload["input_dim"], payload["num_classes"], values)
    raise ValueError(f"unknown parameter record kind {payload['kind']!r}")


def write_model(model: FittedModel, path: str | Path) -> None:
    doc = {
        "format": "persimix-model",
        "method": model.method,
        "scale_thresholds": list(model.scale.thresholds) if model.scale else None,
        "delta": model.delta,
        "horizon": model.horizon,
        "standardization": (
            {
                "mean": [float(v) for v in model.standardization.mean],
                "std": [float(v) for v in model.standardization.std],
            }
            if model.standardization
            else None
        ),
        "chosen": model.chosen,
        "meta": model.meta,
        "params": _params_payload(model),
    }
    with _atomic(path) as handle:
        json.dump(doc, handle, indent=2)
        handle.write("\n")


def read_model(path: str | Path) -> FittedModel:
    with open(path) as handle:
        doc = json.load(handle)
    if doc.get("format") != "persimix-model":
        raise ValueError(f"{path}: not a persimix model file")
    std = doc.get("standardization")
    return FittedModel(
        method=doc["method"],
        params=_params_from_payload(doc.get("params")),
        scale=OrdinalScale(tuple(doc["scale_thresholds"])) if doc.get("scale_thresholds") else None,
        delta=doc.get("delta"),
        horizon=doc.get("horizon"),
        standardization=(
            Standardization(np.asarray(std["mean"]), np.asarray(std["std"])) if std else None
        ),
        chosen=doc.get("chosen", {}),
        meta=doc.get("meta", {}),
    )


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------


def grid_from_mapping(mapping: dict) -> HyperGrid:
    """Grid from config keys ``m``, ``iter``, ``lambda`` (all optional)."""
    defaults = HyperGrid()
    return HyperGrid(
        hidden_units=tuple(int(v) for v in mapping.get("m", defaults.hidden_units)),
        iterations=tuple(int(v) for v in mapping.get("iter", defaults.iterations)),
        l2=tuple(float(v) for v in mapping.get("lambda", defaults.l2)),
    )


def train_spec_from_mapping(mapping: dict, method: str | None = None) -> TrainSpec:
    """TrainSpec from the documented config keys.

    Recognised keys: method, grid.m, grid.iter, grid.lambda, repeats, seed,
    cv_folds, selection_metric (delta and horizon live beside the spec).
    """
    return TrainSpec(
        method=method if method is not None else mapping["method"],
        grid=grid_from_mapping(mapping.get("grid", {})),
        repeats=int(mapping.get("repeats", 10)),
        seed=int(mapping.get("seed", 0)),
        cv_folds=int(mapping.get("cv_folds", 5)),
        selection_metric=str(mapping.get("selection_metric", "amae")),
    )


def load_config(path: str | Path) -> dict:
    with open(path) as handle:
        try:
            return json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: invalid JSON ({exc})") from None
