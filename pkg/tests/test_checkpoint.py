import json

import numpy as np
import pytest

from flowcf.cfengine import GenerationConfig, LossWeights
from flowcf.checkpoint import (FORMAT_VERSION, load_checkpoint, save_checkpoint)
from flowcf.datasets import make_adult
from flowcf.encoding import subset_table
from flowcf.errors import ConfigError
from flowcf.pipeline import (generate_for_bundle, holdout_table,
                             train_bundle, write_artifacts)


@pytest.fixture()
def roundtripped(mid_bundle, tmp_path):
    bundle, _ = mid_bundle
    path = tmp_path / "model.ckpt.json"
    save_checkpoint(path, bundle)
    return bundle, load_checkpoint(path), path


def test_parameters_roundtrip_bit_exact(roundtripped):
    original, loaded, _ = roundtripped
    for a, b in zip(original.classifier.params, loaded.classifier.params):
        assert a.name == b.name and np.array_equal(a.data, b.data)
    for a, b in zip(original.flow.params, loaded.flow.params):
        assert a.name == b.name and np.array_equal(a.data, b.data)


def test_encoder_state_roundtrip(roundtripped):
    original, loaded, _ = roundtripped
    assert np.array_equal(original.encoder.mean, loaded.encoder.mean)
    assert np.array_equal(original.encoder.std, loaded.encoder.std)
    for col, lt in original.encoder.columns.items():
        assert loaded.encoder.columns[col].means == lt.means
        assert np.array_equal(loaded.encoder.columns[col].sorted_values,
                              lt.sorted_values)


def test_schema_and_config_roundtrip(roundtripped):
    original, loaded, _ = roundtripped
    assert loaded.schema == original.schema
    assert loaded.seed == original.seed
    assert loaded.run_config == original.run_config
    assert loaded.loss_weights.nll_weight == original.loss_weights.nll_weight
    assert loaded.flow.config == original.flow.config


def test_generation_byte_identical_after_roundtrip(roundtripped, adult_mid,
                                                   mid_config, tmp_path):
    original, loaded, _ = roundtripped
    table_te, _ = holdout_table(adult_mid.table, adult_mid.y, mid_config)
    inputs = subset_table(table_te, np.arange(10))
    cfg = GenerationConfig(m=5, temperature=1.0, seed=17)
    sets_a, el_a = generate_for_bundle(original, inputs, cfg)
    sets_b, el_b = generate_for_bundle(loaded, inputs, cfg)
    pa = write_artifacts(tmp_path / "orig", original, inputs, sets_a, el_a)
    pb = write_artifacts(tmp_path / "loaded", loaded, inputs, sets_b, el_b)
    for name in ("cfs", "inputs", "inputs_encoded", "cfs_encoded", "cf_probs",
                 "cf_log_probs", "input_probs"):
        assert pa[name].read_bytes() == pb[name].read_bytes()


def test_version_check(roundtripped, tmp_path):
    _, _, path = roundtripped
    doc = json.loads(path.read_text())
    doc["format_version"] = FORMAT_VERSION + 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="version"):
        load_checkpoint(bad)


def test_ohe_bundle_roundtrip(tmp_path):
    from flowcf.cfengine import CfTrainConfig
    from flowcf.classifier import ClassifierConfig
    from flowcf.flow import FlowConfig
    from flowcf.pipeline import RunConfig

    fx = make_adult(n=600, seed=21)
    cfg = RunConfig(seed=2, k_folds=4, encoder_kind="ohe",
                    classifier=ClassifierConfig(hidden=(16, 8, 8), epochs=2),
                    flow=FlowConfig(hidden=8, hidden_layers=2),
                    train=CfTrainConfig(epochs=1),
                    generation=GenerationConfig(m=3, decode=False))
    bundle, _ = train_bundle(fx.table, fx.y, fx.schema, cfg)
    path = tmp_path / "ohe.json"
    save_checkpoint(path, bundle)
    loaded = load_checkpoint(path)
    assert loaded.encoder.width == 30
    assert loaded.encoder.feature_names == bundle.encoder.feature_names
    X = loaded.encoder.transform(fx.table)
    assert np.array_equal(loaded.classifier.predict(X[:5]),
                          bundle.classifier.predict(bundle.encoder.transform(fx.table)[:5]))


def test_loss_weights_with_arrays_roundtrip(mid_bundle, tmp_path):
    bundle, _ = mid_bundle
    import dataclasses

    heavy = LossWeights(feature_weights=np.full(8, 2.5), monotonic_idx=(7,))
    modified = dataclasses.replace(bundle, loss_weights=heavy)
    path = tmp_path / "w.json"
    save_checkpoint(path, modified)
    loaded = load_checkpoint(path)
    assert np.array_equal(loaded.loss_weights.feature_weights, heavy.feature_weights)
    assert loaded.loss_weights.monotonic_idx == (7,)
