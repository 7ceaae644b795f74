"""Self-contained checkpoint: one versioned JSON document.

Everything needed to score and generate lives in a single file: schema,
encoder state, classifier and flow parameters, loss weights, and the run
configuration snapshot. Parameter arrays are stored as flat lists of
decimal float64 literals; Python's repr round-trips them exactly, so a
save/load cycle reproduces bit-identical models.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from .cfengine import LossWeights
from .classifier import BinaryClassifier, ClassifierConfig
from .encoding import LevelTable, OneHotEncoder, Schema, TargetEncoder
from .errors import ConfigError
from .flow import Flow, FlowConfig

FORMAT_VERSION = 1


@dataclass
class TrainedBundle:
    """A fitted encoder + frozen classifier + trained flow, plus the
    configuration that produced them."""

    schema: Schema
    encoder_kind: str  # "te" | "ohe"
    encoder: TargetEncoder | OneHotEncoder
    classifier: BinaryClassifier
    flow: Flow
    loss_weights: LossWeights
    run_config: dict
    seed: int


def _pack_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}


def _unpack_array(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])


def _pack_params(params) -> list[dict]:
    return [{"name": p.name, **_pack_array(p.data)} for p in params]


def _restore_params(params, packed: list[dict]) -> None:
    if len(params) != len(packed):
        raise ConfigError(f"checkpoint has {len(packed)} parameters, model needs {len(params)}")
    for p, d in zip(params, packed):
        if p.name != d["name"]:
            raise ConfigError(f"parameter order mismatch: '{p.name}' vs '{d['name']}'")
        arr = _unpack_array(d)
        if arr.shape != p.data.shape:
            raise ConfigError(f"parameter '{p.name}' shape mismatch: {arr.shape}")
        p.data = arr


def _pack_encoder(kind: str, enc) -> dict:
    if kind == "te":
        return {
            "k_folds": enc.k_folds,
            "seed": enc.seed,
            "mean": _pack_array(enc.mean),
            "std": _pack_array(enc.std),
            "columns": {name: {"means": lt.means, "global_mean": lt.global_mean}
                        for name, lt in enc.columns.items()},
        }
    return {
        "levels": {name: list(levels) for name, levels in enc.levels.items()},
        "mean": _pack_array(enc.mean),
        "std": _pack_array(enc.std),
    }


def _restore_encoder(kind: str, schema: Schema, d: dict):
    if kind == "te":
        enc = TargetEncoder(schema, k_folds=d["k_folds"], seed=d["seed"])
        enc.mean = _unpack_array(d["mean"])
        enc.std = _unpack_array(d["std"])
        enc.columns = {name: LevelTable.build(col["means"], col["global_mean"])
                       for name, col in d["columns"].items()}
        return enc
    enc = OneHotEncoder(schema)
    enc.levels = {name: tuple(levels) for name, levels in d["levels"].items()}
    names = []
    for name in schema.features:
        if schema.kinds[name] == "categorical":
            names.extend(f"{name}={lv}" for lv in enc.levels[name])
        else:
            names.append(name)
    enc._names = tuple(names)
    enc.mean = _unpack_array(d["mean"])
    enc.std = _unpack_array(d["std"])
    return enc


def _loss_weights_dict(w: LossWeights) -> dict:
    return {
        "nll_weight": w.nll_weight,
        "feature_weights": None if w.feature_weights is None
        else w.feature_weights.tolist(),
        "monotonic_idx": list(w.monotonic_idx),
        "mon_weight": w.mon_weight,
        "terms": list(w.terms),
        "target_class": w.target_class,
    }


def _loss_weights_from(d: dict) -> LossWeights:
    return LossWeights(
        nll_weight=d["nll_weight"],
        feature_weights=None if d["feature_weights"] is None
        else np.asarray(d["feature_weights"]),
        monotonic_idx=tuple(d["monotonic_idx"]),
        mon_weight=d["mon_weight"],
        terms=tuple(d["terms"]),
        target_class=d["target_class"],
    )


def save_checkpoint(path, bundle: TrainedBundle) -> None:
    doc: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "schema": bundle.schema.to_dict(),
        "encoder_kind": bundle.encoder_kind,
        "encoder": _pack_encoder(bundle.encoder_kind, bundle.encoder),
        "classifier": {
            "in_dim": bundle.classifier.in_dim,
            "config": asdict(bundle.classifier.config),
            "params": _pack_params(bundle.classifier.params),
        },
        "flow": {
            "dim": bundle.flow.dim,
            "config": asdict(bundle.flow.config),
            "params": _pack_params(bundle.flow.params),
        },
        "loss_weights": _loss_weights_dict(bundle.loss_weights),
        "run_config": bundle.run_config,
        "seed": bundle.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path) -> TrainedBundle:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ConfigError(f"unsupported checkpoint format version {version!r}")
    schema = Schema.from_dict(doc["schema"])
    kind = doc["encoder_kind"]
    encoder = _restore_encoder(kind, schema, doc["encoder"])

    ccfg = doc["classifier"]["config"]
    ccfg["hidden"] = tuple(ccfg["hidden"])
    classifier = BinaryClassifier(doc["classifier"]["in_dim"], ClassifierConfig(**ccfg))
    _restore_params(classifier.params, doc["classifier"]["params"])

    flow = Flow(doc["flow"]["dim"], FlowConfig(**doc["flow"]["config"]))
    _restore_params(flow.params, doc["flow"]["params"])

    return TrainedBundle(
        schema=schema,
        encoder_kind=kind,
        encoder=encoder,
        classifier=classifier,
        flow=flow,
        loss_weights=_loss_weights_from(doc["loss_weights"]),
        run_config=doc["run_config"],
        seed=doc["seed"],
    )
