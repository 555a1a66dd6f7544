"""Command-line front end.

Subcommands: generate, windows, train, evaluate, experiment, gradcheck,
trace.  Exit codes: 0 success, 1 domain error, 2 usage error.  The default
worker count comes from ``PERSIMIX_THREADS`` (overridable with --threads);
results are bit-reproducible at thread count 1.
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio, datagen, gradcheck, optimizer, training
from .core import InsufficientDataError, OrdinalScale, build_windows, class_distribution, persistence_rate


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("PERSIMIX_THREADS", "1")))
    except ValueError:
        return 1


def _scale_from_args(thresholds: list[float] | None, num_classes: int | None) -> OrdinalScale | None:
    if thresholds:
        return OrdinalScale(tuple(thresholds))
    if num_classes:
        return OrdinalScale.identity(num_classes)
    return None


def _load_series(path: str, scale: OrdinalScale | None):
    records = dataio.read_series(path, scale)
    if scale is None:
        scale = OrdinalScale.identity(max(rec.label for rec in records))
    return records, scale


def _gen_config_from_mapping(mapping: dict) -> datagen.GenConfig:
    return datagen.GenConfig(
        num_steps=int(mapping["num_steps"]),
        num_classes=int(mapping["num_classes"]),
        feature_dim=int(mapping.get("feature_dim", 3)),
        base_persistence=float(mapping.get("base_persistence", 0.9)),
        switch_signal_strength=float(mapping.get("switch_signal_strength", 0.0)),
        class_marginals=tuple(float(v) for v in mapping["class_marginals"]),
        gap_probability=float(mapping.get("gap_probability", 0.0)),
        seed=int(mapping.get("seed", 0)),
    )


def _cmd_generate(args: argparse.Namespace) -> int:
    if args.config:
        cfg = _gen_config_from_mapping(dataio.load_config(args.config))
    else:
        marginals = (
            tuple(args.marginals)
            if args.marginals
            else tuple(datagen.np.full(args.classes, 1.0 / args.classes))
        )
        cfg = datagen.GenConfig(
            num_steps=args.steps,
            num_classes=args.classes,
            feature_dim=args.features,
            base_persistence=args.persistence,
            switch_signal_strength=args.strength,
            class_marginals=marginals,
            gap_probability=args.gap_probability,
            seed=args.seed,
        )
    records = datagen.generate(cfg)
    dataio.write_series(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _cmd_windows(args: argparse.Namespace) -> int:
    scale = _scale_from_args(args.scale_thresholds, args.classes)
    records, scale = _load_series(args.data, scale)
    ds = build_windows(records, args.delta, args.horizon, scale)
    dist = class_distribution(ds)
    print(f"patterns: {len(ds)}")
    print(f"input_dim: {ds.input_dim}")
    print(f"class_distribution: {dist.tolist()}")
    print(f"persistence_rate: {persistence_rate(ds):.6f}")
    if args.out:
        with dataio._atomic(args.out) as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["origin_t", "current_label", "target", *(f"z{i}" for i in range(ds.input_dim))]
            )
            for i in range(len(ds)):
                writer.writerow(
                    [
                        int(ds.origins[i]),
                        int(ds.current[i]),
                        int(ds.targets[i]),
                        *(dataio.fmt(v) for v in ds.z[i]),
                    ]
                )
        print(f"wrote window dump to {args.out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = dataio.load_config(args.config)
    method = args.method or config.get("method")
    if method not in training.METHODS:
        raise ValueError(f"config key 'method': unknown method {method!r}; expected one of {training.METHODS}")
    spec = dataio.train_spec_from_mapping(config, method=method)
    if args.seed is not None:
        spec = dataio.train_spec_from_mapping({**config, "seed": args.seed}, method=method)
    delta = args.delta if args.delta is not None else int(config.get("delta", 1))
    horizon = args.horizon if args.horizon is not None else int(config.get("horizon", 1))

    scale = _scale_from_args(config.get("thresholds"), config.get("num_classes"))
    records, scale = _load_series(args.data, scale)
    ds = build_windows(records, delta, horizon, scale)
    model = training.fit_method(ds, spec, threads=args.threads)
    dataio.write_model(model, args.out)
    print(f"trained {method} on {len(ds)} patterns; chosen={model.chosen}")
    if args.trace_out and "trace" in model.meta:
        # Refit at the stored seed to recover the full loss trace.
        params, result = training._fit_params(ds, spec.method, model.chosen, model.meta["seed"])
        if result is not None:
            optimizer.dump_trace(result.trace, args.trace_out)
            print(f"wrote loss trace to {args.trace_out}")
    print(f"wrote model to {args.out}")
    return 0


def _windows_for_model(model: training.FittedModel, data_path: str):
    if model.scale is None or model.delta is None or model.horizon is None:
        raise ValueError("model file lacks windowing metadata (scale/delta/horizon)")
    records = dataio.read_series(data_path, model.scale)
    return build_windows(records, model.delta, model.horizon, model.scale, model.standardization)


def _cmd_evaluate(args: argparse.Namespace) -> int:
    model = dataio.read_model(args.model)
    ds = _windows_for_model(model, args.data)
    report = training.evaluate_model(model, ds)
    result = training.ExperimentResult(
        rows=[training.ExperimentRow(model.method, 0, 0, model.chosen, report)]
    )
    print(dataio.render_table(result), end="")
    if args.out:
        dataio.write_report(result, args.out)
        print(f"wrote report to {args.out}")
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    config = dataio.load_config(args.config)
    for key in ("methods", "data"):
        if key not in config:
            raise ValueError(f"config key {key!r} is required")
    methods = config["methods"]
    for method in methods:
        if method not in training.METHODS:
            raise ValueError(
                f"config key 'methods': unknown method {method!r}; expected one of {training.METHODS}"
            )

    data_cfg = config["data"]
    if "generate" in data_cfg:
        gen_cfg = _gen_config_from_mapping(data_cfg["generate"])
        records = datagen.generate(gen_cfg)
        scale = OrdinalScale.identity(gen_cfg.num_classes)
    elif "path" in data_cfg:
        scale = _scale_from_args(data_cfg.get("thresholds"), data_cfg.get("num_classes"))
        records, scale = _load_series(data_cfg["path"], scale)
    else:
        raise ValueError("config key 'data' needs either 'generate' or 'path'")

    delta = int(config.get("delta", 1))
    horizon = int(config.get("horizon", 1))
    num_splits = int(config.get("num_splits", 3))
    splits = training.make_winter_splits(records, num_splits, delta, horizon, scale)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    combined = training.ExperimentResult(rows=[])
    for method in methods:
        spec = dataio.train_spec_from_mapping(config, method=method)
        combined.extend(training.run_experiment(splits, spec, threads=args.threads))
    dataio.write_report(combined, out_dir / "report.csv")
    table = dataio.render_table(combined)
    with dataio._atomic(out_dir / "table.txt") as handle:
        handle.write(table)
    print(table, end="")
    print(f"wrote {out_dir / 'report.csv'} and {out_dir / 'table.txt'}")
    return 0


def _cmd_gradcheck(args: argparse.Namespace) -> int:
    result = gradcheck.check_gradients(seed=args.seed, trials=args.trials, corrupt=args.corrupt)
    print(f"trials: {result.trials} per suite")
    print(f"worst relative error: {result.worst_rel:.3e}")
    if result.failures:
        for failure in result.failures[:20]:
            print(f"FAIL {failure}", file=sys.stderr)
        print(f"{len(result.failures)} gradient components out of tolerance", file=sys.stderr)
        return 1
    print("all gradient components within tolerance")
    return 0


def _cmd_trace(args: argparse.Namespace) -> int:
    model = dataio.read_model(args.model)
    ds = _windows_for_model(model, args.data)
    preds = model.predict_dataset(ds)
    probs = model.probabilities(ds)
    alphas = model.gate_values(ds)
    q = ds.num_classes
    with dataio._atomic(args.out) as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["t", "true_label", "predicted_label", "gate_alpha", *(f"p_{c}" for c in range(1, q + 1))]
        )
        for i in range(len(ds)):
            alpha_cell = dataio.fmt(alphas[i]) if alphas is not None else ""
            writer.writerow(
                [
                    int(ds.origins[i]),
                    int(ds.targets[i]),
                    int(preds[i]),
                    alpha_cell,
                    *(dataio.fmt(v) for v in probs[i]),
                ]
            )
    print(f"wrote {len(ds)} trace rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="persimix",
        description="Persistence-gated mixture-of-experts for ordinal time series",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic ordinal series CSV")
    p.add_argument("--config", help="JSON generator config")
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=10000)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--features", type=int, default=3)
    p.add_argument("--persistence", type=float, default=0.9)
    p.add_argument("--strength", type=float, default=0.0)
    p.add_argument("--marginals", type=float, nargs="+")
    p.add_argument("--gap-probability", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("windows", help="build windows and print dataset summary")
    p.add_argument("--data", required=True)
    p.add_argument("--delta", type=int, default=1)
    p.add_argument("--horizon", type=int, default=1)
    p.add_argument("--scale-thresholds", type=float, nargs="+")
    p.add_argument("--classes", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_windows)

    p = sub.add_parser("train", help="cross-validate and train one method")
    p.add_argument("--config", required=True, help="JSON training spec")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method")
    p.add_argument("--delta", type=int)
    p.add_argument("--horizon", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--trace-out", help="optional loss trace CSV")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a saved model on a series")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("experiment", help="full protocol: splits x methods x repeats")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=_default_threads())
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=_cmd_gradcheck)

    p = sub.add_parser("trace", help="emit per-pattern prediction trace CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_trace)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, InsufficientDataError, optimizer.NonFiniteLossError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
