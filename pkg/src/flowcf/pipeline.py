"""End-to-end experiment pipelines.

Compose the encoder, classifier, flow, generator, and metrics into the
studies the package ships: single training runs, counterfactual artifact
production, evaluation (with constraint accuracies when the schema flags
features), temperature/M sweeps, the loss-term ablation, the domain
constraint comparison, and the encoding comparison.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cfengine import (CfTrainConfig, CFSet, GenerationConfig, LossWeights,
                       generate_from_encoded, train_cf_flow)
from .checkpoint import TrainedBundle
from .classifier import ClassifierConfig, train_classifier
from .encoding import (OneHotEncoder, Schema, Table, TargetEncoder,
                       subset_table, table_rows)
from .errors import ConfigError, DataError
from .flow import FlowConfig
from .metrics import (MetricsReport, compute_report, fix_accuracy,
                      monotonicity_accuracy)


@dataclass
class RunConfig:
    """One experiment's knobs; everything defaults to the evaluation
    protocol (90/10 split, 10-fold target encoding, 10 epochs, batch 64,
    nll weight 0.01, temperature 1.0)."""

    split: float = 0.9
    seed: int = 0
    encoder_kind: str = "te"
    k_folds: int = 10
    classifier: ClassifierConfig = field(default_factory=ClassifierConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    train: CfTrainConfig = field(default_factory=CfTrainConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    threshold: float = 0.5
    n_test: int = 100

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise ConfigError(f"split must be in (0, 1), got {self.split}")
        if self.encoder_kind not in ("te", "ohe"):
            raise ConfigError(f"encoder kind must be 'te' or 'ohe', got {self.encoder_kind!r}")

    def snapshot(self) -> dict:
        """JSON-canonical dict of this config (tuples become lists, arrays
        become lists of floats), so checkpoints round-trip equal."""
        from dataclasses import asdict

        d = asdict(self)
        lw = d["loss"]
        if lw["feature_weights"] is not None:
            lw["feature_weights"] = list(map(float, lw["feature_weights"]))
        return json.loads(json.dumps(d))


def split_indices(n: int, split: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Seeded permutation split into train/test index arrays."""
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(round(n * split))
    if cut == 0 or cut == n:
        raise DataError(f"split {split} leaves an empty side for n={n}")
    return perm[:cut], perm[cut:]


def train_bundle(table: Table, y: np.ndarray, schema: Schema,
                 config: RunConfig) -> tuple[TrainedBundle, dict]:
    """Fit encoder on the training split, train the classifier, then the
    flow against the frozen classifier. Returns the bundle plus traces."""
    n = len(y)
    tr_idx, _ = split_indices(n, config.split, config.seed)
    table_tr = subset_table(table, tr_idx)
    y_tr = y[tr_idx]

    if config.encoder_kind == "te":
        encoder = TargetEncoder(schema, k_folds=config.k_folds, seed=config.seed)
        X_tr = encoder.fit_transform(table_tr, y_tr)
    else:
        encoder = OneHotEncoder(schema)
        X_tr = encoder.fit_transform(table_tr)

    clf_config = replace(config.classifier, seed=config.seed)
    classifier, clf_trace = train_classifier(X_tr, y_tr, clf_config)

    loss = config.loss
    if loss.feature_weights is not None and len(loss.feature_weights) != encoder.width:
        raise ConfigError("feature weights do not match the encoded width")
    flow_config = replace(config.flow, seed=config.seed)
    train_config = replace(config.train, seed=config.seed)
    flow, flow_trace = train_cf_flow(X_tr, classifier, flow_config, loss, train_config)

    bundle = TrainedBundle(
        schema=schema, encoder_kind=config.encoder_kind, encoder=encoder,
        classifier=classifier, flow=flow, loss_weights=loss,
        run_config=config.snapshot(), seed=config.seed)
    traces = {"classifier_epoch_loss": clf_trace.epoch_losses,
              "flow_epoch_total": flow_trace.epoch_totals,
              "flow_epoch_terms": flow_trace.epoch_terms}
    return bundle, traces


def select_test_inputs(bundle: TrainedBundle, table_test: Table,
                       threshold: float = 0.5, n_max: int | None = None) -> np.ndarray:
    """Indices of test rows whose predicted probability is below the
    threshold (the pool that wants recourse), in data order."""
    X = bundle.encoder.transform(table_test)
    probs = bundle.classifier.predict(X)
    pool = np.where(probs < threshold)[0]
    if len(pool) == 0:
        raise DataError(f"no test inputs with predicted probability < {threshold}")
    return pool[:n_max] if n_max is not None else pool


def holdout_table(table: Table, y: np.ndarray, config: RunConfig) -> tuple[Table, np.ndarray]:
    _, te_idx = split_indices(len(y), config.split, config.seed)
    return subset_table(table, te_idx), y[te_idx]


def generate_for_bundle(bundle: TrainedBundle, table_inputs: Table,
                        gen_config: GenerationConfig) -> tuple[list[CFSet], float]:
    """Encode raw rows and run the generator; returns sets + elapsed secs."""
    X = bundle.encoder.transform(table_inputs)
    decoder = bundle.encoder if (gen_config.decode and bundle.encoder_kind == "te") else None
    if gen_config.decode and decoder is None:
        raise ConfigError("decoding requested but the bundle uses one-hot encoding")
    t0 = time.perf_counter()
    sets = generate_from_encoded(bundle.flow, bundle.classifier, X, gen_config, decoder)
    return sets, time.perf_counter() - t0


def constraint_value_arrays(bundle: TrainedBundle, table_inputs: Table,
                            sets: list[CFSet]):
    """Raw-space value arrays for the constraint metrics: exact levels (or
    numbers) for fixed features, numeric values for monotone ones."""
    schema = bundle.schema
    fix_in, fix_cf, mon_in, mon_cf = {}, {}, {}, {}
    for name in schema.immutable:
        if schema.kinds[name] == "categorical":
            fix_in[name] = table_inputs[name]
            fix_cf[name] = np.stack([s.require_decoded().levels[name] for s in sets])
        else:
            fix_in[name] = table_inputs[name].astype(np.float64)
            fix_cf[name] = np.stack([s.require_decoded().values[name] for s in sets])
    for name in schema.monotonic:
        if schema.kinds[name] == "categorical":
            lt = bundle.encoder.columns[name]
            mon_in[name] = lt.encode(table_inputs[name])
        else:
            mon_in[name] = table_inputs[name].astype(np.float64)
        mon_cf[name] = np.stack([s.require_decoded().values[name] for s in sets])
    return fix_in, fix_cf, mon_in, mon_cf


def evaluate_sets(bundle: TrainedBundle, table_inputs: Table, sets: list[CFSet],
                  elapsed_seconds: float, constraints: bool | None = None) -> MetricsReport:
    """Full metrics over generated sets; constraint accuracies are added
    when the schema flags features (or when forced via `constraints`)."""
    inputs_encoded = np.vstack([s.input_encoded for s in sets])
    cf_encoded = [s.cfs_encoded for s in sets]
    test_probs = np.array([s.input_prob for s in sets])
    cf_probs = [s.probs for s in sets]
    report = compute_report(inputs_encoded, cf_encoded, test_probs, cf_probs,
                            elapsed_seconds)
    schema = bundle.schema
    want = constraints if constraints is not None else bool(
        (schema.immutable or schema.monotonic) and sets and sets[0].decoded is not None)
    if want:
        fix_in, fix_cf, mon_in, mon_cf = constraint_value_arrays(bundle, table_inputs, sets)
        if schema.immutable:
            report.fix_accuracy = fix_accuracy(fix_in, fix_cf, schema.immutable)
        if schema.monotonic:
            report.monotonicity_accuracy = monotonicity_accuracy(
                mon_in, mon_cf, schema.monotonic)
    return report


# -- artifact files ---------------------------------------------------------------

def write_artifacts(out_dir, bundle: TrainedBundle, table_inputs: Table,
                    sets: list[CFSet], elapsed_seconds: float) -> dict[str, Path]:
    """Write the counterfactual artifact files.

    cfs.csv / inputs.csv are decoded human-readable tables (cf rows sorted
    by log-likelihood descending per input); the .npy arrays hold the
    encoded-space values for metric replay. Timing lives in its own file
    so the deterministic artifacts stay byte-comparable across runs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    schema = bundle.schema
    paths: dict[str, Path] = {}

    input_rows = table_rows(table_inputs, schema)
    paths["inputs"] = out / "inputs.csv"
    with open(paths["inputs"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["input_id", *schema.features, "probability"])
        for i, (row, s) in enumerate(zip(input_rows, sets)):
            writer.writerow([i, *[_fmt(row[c]) for c in schema.features], repr(s.input_prob)])

    paths["cfs"] = out / "cfs.csv"
    with open(paths["cfs"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["input_id", *schema.features, "probability", "log_likelihood"])
        for i, s in enumerate(sets):
            decoded_rows = s.require_decoded().rows()
            for j in s.order_by_likelihood():
                row = decoded_rows[j]
                writer.writerow([i, *[_fmt(row[c]) for c in schema.features],
                                 repr(float(s.probs[j])), repr(float(s.log_probs[j]))])

    arrays = {
        "inputs_encoded": np.vstack([s.input_encoded for s in sets]),
        "cfs_encoded": np.stack([s.cfs_encoded for s in sets]),
        "input_probs": np.array([s.input_prob for s in sets]),
        "cf_probs": np.stack([s.probs for s in sets]),
        "cf_log_probs": np.stack([s.log_probs for s in sets]),
    }
    for name, arr in arrays.items():
        paths[name] = out / f"{name}.npy"
        np.save(paths[name], arr)

    paths["timing"] = out / "timing.json"
    with open(paths["timing"], "w", encoding="utf-8") as fh:
        json.dump({"elapsed_seconds": elapsed_seconds,
                   "seconds_per_input": elapsed_seconds / max(len(sets), 1)}, fh)
        fh.write("\n")
    return paths


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def load_artifact_arrays(artifact_dir) -> dict[str, np.ndarray]:
    out = {}
    for name in ("inputs_encoded", "cfs_encoded", "input_probs", "cf_probs",
                 "cf_log_probs"):
        path = Path(artifact_dir) / f"{name}.npy"
        if not path.exists():
            raise DataError(f"artifact file missing: {path}")
        out[name] = np.load(path)
    return out


def evaluate_artifacts(artifact_dir) -> MetricsReport:
    """Metric replay from the encoded arrays written by write_artifacts."""
    arrays = load_artifact_arrays(artifact_dir)
    with open(Path(artifact_dir) / "timing.json", encoding="utf-8") as fh:
        elapsed = json.load(fh)["elapsed_seconds"]
    return compute_report(arrays["inputs_encoded"], list(arrays["cfs_encoded"]),
                          arrays["input_probs"], list(arrays["cf_probs"]), elapsed)


# -- studies ----------------------------------------------------------------------

def run_sweep(bundle: TrainedBundle, table_inputs: Table, axis: str,
              values, gen_config: GenerationConfig) -> list[tuple[float, MetricsReport]]:
    """Repeat generate+evaluate along one axis (temperature or m)."""
    if axis not in ("temperature", "m"):
        raise ConfigError(f"sweep axis must be 'temperature' or 'm', got {axis!r}")
    out = []
    for value in values:
        if axis == "temperature":
            cfg = replace(gen_config, temperature=float(value))
        else:
            cfg = replace(gen_config, m=int(value))
        sets, elapsed = generate_for_bundle(bundle, table_inputs, cfg)
        out.append((float(value), evaluate_sets(bundle, table_inputs, sets, elapsed)))
    return out


ABLATION_VARIANTS = {
    "nll": ("nll",),
    "nll+validity": ("nll", "validity"),
    "full": ("nll", "validity", "proximity"),
}


def run_ablation(table: Table, y: np.ndarray, schema: Schema,
                 config: RunConfig) -> dict[str, MetricsReport]:
    """Retrain with nested loss-term subsets on one seed and evaluate each
    on the shared test selection."""
    reports = {}
    for name, terms in ABLATION_VARIANTS.items():
        cfg = replace(config, loss=replace(config.loss, terms=terms))
        bundle, _ = train_bundle(table, y, schema, cfg)
        table_te, _ = holdout_table(table, y, cfg)
        pool = select_test_inputs(bundle, table_te, cfg.threshold, cfg.n_test)
        inputs = subset_table(table_te, pool)
        sets, elapsed = generate_for_bundle(bundle, inputs, cfg.generation)
        reports[name] = evaluate_sets(bundle, inputs, sets, elapsed)
    return reports


def constrained_loss_weights(schema: Schema, encoder_width_names,
                             immutable_weight: float = 3.0) -> LossWeights:
    """Weights for the domain-constraint run: immutable features get a
    heavier proximity penalty, monotone features get the hinge term."""
    weights = np.array([immutable_weight if n in schema.immutable
                        else schema.weight_of(n) for n in encoder_width_names])
    mon_idx = tuple(i for i, n in enumerate(encoder_width_names)
                    if n in schema.monotonic)
    return LossWeights(feature_weights=weights, monotonic_idx=mon_idx)


def run_constraint_study(table: Table, y: np.ndarray, schema: Schema,
                         config: RunConfig) -> dict[str, MetricsReport]:
    """Train unconstrained and constrained variants on one seed; both share
    the unconstrained model's test-input selection."""
    if not schema.immutable and not schema.monotonic:
        raise ConfigError("schema flags no immutable or monotonic features")
    if config.encoder_kind != "te":
        raise ConfigError("the constraint study needs decoded levels (target encoding)")
    plain, _ = train_bundle(table, y, schema, config)
    table_te, _ = holdout_table(table, y, config)
    pool = select_test_inputs(plain, table_te, config.threshold, config.n_test)
    inputs = subset_table(table_te, pool)

    loss_con = constrained_loss_weights(schema, plain.encoder.feature_names)
    cfg_con = replace(config, loss=loss_con)
    constrained, _ = train_bundle(table, y, schema, cfg_con)

    out = {}
    for name, bundle in (("unconstrained", plain), ("constrained", constrained)):
        sets, elapsed = generate_for_bundle(bundle, inputs, config.generation)
        out[name] = evaluate_sets(bundle, inputs, sets, elapsed, constraints=True)
    return out


def run_encoding_comparison(table: Table, y: np.ndarray, schema: Schema,
                            config: RunConfig) -> dict:
    """Train the whole stack under target encoding and one-hot encoding on
    the same seed; report held-out accuracy and the prediction-spread
    statistics of each."""
    out = {}
    for kind in ("te", "ohe"):
        cfg = replace(config, encoder_kind=kind,
                      generation=replace(config.generation, decode=False))
        bundle, _ = train_bundle(table, y, schema, cfg)
        table_te, y_te = holdout_table(table, y, cfg)
        X_te = bundle.encoder.transform(table_te)
        accuracy = bundle.classifier.accuracy(X_te, y_te)
        pool = select_test_inputs(bundle, table_te, cfg.threshold, cfg.n_test)
        inputs = subset_table(table_te, pool)
        sets, elapsed = generate_for_bundle(bundle, inputs, cfg.generation)
        report = evaluate_sets(bundle, inputs, sets, elapsed)
        out[kind] = {"accuracy": accuracy, "report": report,
                     "encoding": report.encoding}
    return out
