"""Command-line entry point.

Subcommands: train, generate, evaluate, sweep, ablate, constraints, serve.
Exit codes: 0 on success, 2 on any handled error (the message carries the
stable error-code token).
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .cfengine import CfTrainConfig, GenerationConfig, LossWeights
from .checkpoint import load_checkpoint, save_checkpoint
from .classifier import ClassifierConfig
from .encoding import load_schema, load_table, subset_table
from .errors import DataError, FlowcfError
from .flow import FlowConfig
from .metrics import fix_accuracy, monotonicity_accuracy
from .pipeline import (RunConfig, evaluate_artifacts, generate_for_bundle,
                       holdout_table, run_ablation, run_constraint_study,
                       run_sweep, select_test_inputs, train_bundle,
                       write_artifacts)
from . import service


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowcf",
        description="Counterfactual explanations via an invertible flow "
                    "over target-encoded features")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--data", help="CSV dataset path")
    common.add_argument("--schema", help="schema JSON path")
    common.add_argument("--checkpoint", help="checkpoint JSON path")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--encoder", choices=("te", "ohe"), default="te")
    common.add_argument("--epochs", type=int, default=10)
    common.add_argument("--batch-size", type=int, default=64)
    common.add_argument("--lambda", dest="nll_weight", type=float, default=0.01)
    common.add_argument("--temperature", type=float, default=1.0)
    common.add_argument("--m", type=int, default=100, help="samples per input")
    common.add_argument("--ntes", type=int, default=100, help="test inputs to explain")
    common.add_argument("--kfolds", type=int, default=10)
    common.add_argument("--split", type=float, default=0.9)
    common.add_argument("--threshold", type=float, default=0.5,
                        help="test-input selection cutoff on predicted probability")
    common.add_argument("--bind", default="127.0.0.1:8080")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", parents=[common], help="fit encoder, classifier, flow")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", parents=[common],
                       help="produce counterfactual artifacts for the test pool")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", parents=[common], help="metrics over artifacts")
    p.add_argument("--artifacts", help="artifact directory (default: --out)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common],
                       help="repeat generate+evaluate along temperature or m")
    p.add_argument("--axis", choices=("temperature", "m"), required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--plot", action="store_true", help="also write sweep.png")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", parents=[common],
                       help="retrain with nested loss-term subsets")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("constraints", parents=[common],
                       help="compare unconstrained vs domain-constrained training")
    p.set_defaults(func=cmd_constraints)

    p = sub.add_parser("serve", parents=[common], help="run the HTTP service")
    p.add_argument("--static", help="directory of UI assets to serve at /")
    p.set_defaults(func=cmd_serve)
    return parser


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise DataError(f"--{name} is required for this command", code="bad_config")


def _run_config(args) -> RunConfig:
    return RunConfig(
        split=args.split,
        seed=args.seed,
        encoder_kind=args.encoder,
        k_folds=args.kfolds,
        classifier=ClassifierConfig(epochs=args.epochs, batch_size=args.batch_size),
        flow=FlowConfig(),
        loss=LossWeights(nll_weight=args.nll_weight),
        train=CfTrainConfig(epochs=args.epochs, batch_size=args.batch_size),
        generation=GenerationConfig(m=args.m, temperature=args.temperature,
                                    seed=args.seed,
                                    decode=args.encoder == "te"),
        threshold=args.threshold,
        n_test=args.ntes,
    )


def _load_dataset(args):
    _require(args, "data", "schema")
    schema = load_schema(args.schema)
    table, y = load_table(args.data, schema)
    return schema, table, y


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_train(args) -> int:
    schema, table, y = _load_dataset(args)
    config = _run_config(args)
    bundle, traces = train_bundle(table, y, schema, config)
    bundle.run_config["data_path"] = str(args.data)
    bundle.run_config["schema_path"] = str(args.schema)
    out = _out_dir(args)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "checkpoint.json"
    save_checkpoint(ckpt, bundle)
    with open(out / "traces.json", "w", encoding="utf-8") as fh:
        json.dump(traces, fh, indent=2)
    print(f"trained: encoded width {bundle.encoder.width}, "
          f"checkpoint -> {ckpt}")
    return 0


def _load_bundle(args):
    _require(args, "checkpoint")
    return load_checkpoint(args.checkpoint)


def _test_pool(args, bundle):
    """Re-derive the held-out rows with the checkpoint's split/seed and keep
    those the classifier scores below the threshold."""
    data = args.data or bundle.run_config.get("data_path")
    schema_path = args.schema or bundle.run_config.get("schema_path")
    if data is None or schema_path is None:
        raise DataError("--data/--schema required (not recorded in checkpoint)")
    schema = load_schema(schema_path)
    table, y = load_table(data, schema)
    snap = bundle.run_config
    config = RunConfig(split=snap.get("split", 0.9), seed=bundle.seed,
                       k_folds=snap.get("k_folds", 10))
    table_te, _ = holdout_table(table, y, config)
    pool = select_test_inputs(bundle, table_te, args.threshold, args.ntes)
    return subset_table(table_te, pool)


def cmd_generate(args) -> int:
    bundle = _load_bundle(args)
    inputs = _test_pool(args, bundle)
    gen = GenerationConfig(m=args.m, temperature=args.temperature, seed=args.seed,
                           decode=bundle.encoder_kind == "te")
    sets, elapsed = generate_for_bundle(bundle, inputs, gen)
    paths = write_artifacts(_out_dir(args), bundle, inputs, sets, elapsed)
    print(f"generated {len(sets)} x {gen.m} counterfactuals -> {paths['cfs']}")
    return 0


def _constraint_metrics_from_csv(artifact_dir: Path, bundle) -> dict:
    """FA/MA replay from the decoded artifact tables."""
    schema = bundle.schema

    def read_rows(path):
        with open(path, newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))

    inputs = read_rows(artifact_dir / "inputs.csv")
    cf_rows = read_rows(artifact_dir / "cfs.csv")
    by_input: dict[str, list[dict]] = {}
    for row in cf_rows:
        by_input.setdefault(row["input_id"], []).append(row)
    ids = sorted(by_input, key=int)

    out = {}
    if schema.immutable:
        fix_in = {f: np.array([r[f] for r in inputs], dtype=object)
                  for f in schema.immutable}
        fix_cf = {f: np.array([[r[f] for r in by_input[i]] for i in ids], dtype=object)
                  for f in schema.immutable}
        out["fix_accuracy"] = fix_accuracy(fix_in, fix_cf, schema.immutable)
    numeric_mon = [f for f in schema.monotonic if schema.kinds[f] == "continuous"]
    if numeric_mon:
        mon_in = {f: np.array([float(r[f]) for r in inputs]) for f in numeric_mon}
        mon_cf = {f: np.array([[float(r[f]) for r in by_input[i]] for i in ids])
                  for f in numeric_mon}
        out["monotonicity_accuracy"] = monotonicity_accuracy(mon_in, mon_cf, numeric_mon)
    return out


def cmd_evaluate(args) -> int:
    artifact_dir = Path(args.artifacts or args.out)
    report = evaluate_artifacts(artifact_dir)
    if args.checkpoint:
        bundle = load_checkpoint(args.checkpoint)
        extra = _constraint_metrics_from_csv(artifact_dir, bundle)
        report.fix_accuracy = extra.get("fix_accuracy")
        report.monotonicity_accuracy = extra.get("monotonicity_accuracy")
    out = _out_dir(args)
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out / "report.csv").write_text(
        report.csv_header() + "\n" + report.csv_row() + "\n", encoding="utf-8")
    print(report.to_json(), end="")
    return 0


def cmd_sweep(args) -> int:
    bundle = _load_bundle(args)
    inputs = _test_pool(args, bundle)
    values = [float(v) for v in args.values.split(",") if v]
    gen = GenerationConfig(m=args.m, temperature=args.temperature, seed=args.seed,
                           decode=bundle.encoder_kind == "te")
    results = run_sweep(bundle, inputs, args.axis, values, gen)
    out = _out_dir(args)
    path = out / "sweep.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{args.axis},inner_diversity,outer_diversity,proximity,"
                 "validity,seconds_per_input\n")
        for value, r in results:
            fh.write(f"{value!r},{r.inner_diversity!r},{r.outer_diversity!r},"
                     f"{r.proximity!r},{r.validity!r},{r.seconds_per_input!r}\n")
    if args.plot:
        _write_sweep_plot(out / "sweep.png", args.axis, results)
    for value, r in results:
        print(f"{args.axis}={value:g} ID={r.inner_diversity:.3f} "
              f"OD={r.outer_diversity:.3f} P={r.proximity:.3f} V={r.validity:.3f} "
              f"RT={r.seconds_per_input:.4f}s")
    return 0


def _write_sweep_plot(path, axis, results) -> None:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plot", file=sys.stderr)
        return
    xs = [v for v, _ in results]
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, getter in (("ID", lambda r: r.inner_diversity),
                          ("OD", lambda r: r.outer_diversity),
                          ("P", lambda r: r.proximity),
                          ("V", lambda r: r.validity)):
        ax.plot(xs, [getter(r) for _, r in results], marker="o", label=label)
    ax.set_xlabel(axis)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_ablate(args) -> int:
    schema, table, y = _load_dataset(args)
    reports = run_ablation(table, y, schema, _run_config(args))
    out = _out_dir(args)
    doc = {name: r.to_dict() for name, r in reports.items()}
    (out / "ablation.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    for name, r in reports.items():
        print(f"{name:14s} ID={r.inner_diversity:.3f} OD={r.outer_diversity:.3f} "
              f"P={r.proximity:.3f} V={r.validity:.3f}")
    return 0


def cmd_constraints(args) -> int:
    schema, table, y = _load_dataset(args)
    reports = run_constraint_study(table, y, schema, _run_config(args))
    out = _out_dir(args)
    doc = {name: r.to_dict() for name, r in reports.items()}
    (out / "constraints.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for name, r in reports.items():
        print(f"{name:14s} FA={r.fix_accuracy:.3f} MA={r.monotonicity_accuracy:.3f} "
              f"ID={r.inner_diversity:.3f} OD={r.outer_diversity:.3f} "
              f"P={r.proximity:.3f} V={r.validity:.3f}")
    return 0


def cmd_serve(args) -> int:
    bundle = _load_bundle(args)
    print(f"serving on {args.bind} (checkpoint {args.checkpoint})")
    service.serve(bundle, args.bind, static_dir=args.static)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FlowcfError as e:
        print(f"error[{e.code}]: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error[not_found]: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
