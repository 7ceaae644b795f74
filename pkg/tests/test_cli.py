import csv
import json
from pathlib import Path

import numpy as np
import pytest

from flowcf.checkpoint import load_checkpoint
from flowcf.cli import main
from flowcf.datasets import make_adult, save_fixture


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    fx = make_adult(n=600, seed=3)
    data, schema = save_fixture(root, fx, "adult")
    return str(data), str(schema)


FAST = ["--epochs", "2", "--kfolds", "4", "--seed", "5"]


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    data, schema = dataset
    out = tmp_path_factory.mktemp("train")
    ckpt = out / "model.json"
    code = main(["train", "--data", data, "--schema", schema,
                 "--out", str(out), "--checkpoint", str(ckpt), *FAST])
    assert code == 0
    return data, schema, str(ckpt), out


def test_train_writes_checkpoint_and_traces(trained, capsys):
    _, _, ckpt, out = trained
    assert Path(ckpt).exists()
    traces = json.loads((out / "traces.json").read_text())
    assert len(traces["classifier_epoch_loss"]) == 2
    bundle = load_checkpoint(ckpt)
    assert bundle.encoder.width == 8


def test_train_reruns_are_byte_identical(dataset, tmp_path):
    data, schema = dataset
    payloads = []
    for name in ("a", "b"):
        ckpt = tmp_path / f"{name}.json"
        code = main(["train", "--data", data, "--schema", schema,
                     "--out", str(tmp_path / name), "--checkpoint", str(ckpt),
                     "--epochs", "1", "--kfolds", "4", "--seed", "9"])
        assert code == 0
        payloads.append(ckpt.read_bytes())
    assert payloads[0] == payloads[1]


def test_train_ohe_width(dataset, tmp_path):
    data, schema = dataset
    ckpt = tmp_path / "ohe.json"
    code = main(["train", "--data", data, "--schema", schema, "--encoder", "ohe",
                 "--out", str(tmp_path), "--checkpoint", str(ckpt),
                 "--epochs", "1", "--kfolds", "4"])
    assert code == 0
    assert load_checkpoint(ckpt).encoder.width == 30


def test_generate_and_evaluate(trained, tmp_path):
    data, schema, ckpt, _ = trained
    out = tmp_path / "gen"
    code = main(["generate", "--checkpoint", ckpt, "--data", data,
                 "--schema", schema, "--out", str(out),
                 "--m", "4", "--ntes", "10", "--seed", "1"])
    assert code == 0
    with open(out / "cfs.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 40
    assert {"input_id", "probability", "log_likelihood", "age"} <= set(rows[0])

    code = main(["evaluate", "--artifacts", str(out), "--out", str(out),
                 "--checkpoint", ckpt])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert {"inner_diversity", "outer_diversity", "proximity", "validity",
            "seconds_per_input", "fix_accuracy", "monotonicity_accuracy"} <= set(report)
    csv_lines = (out / "report.csv").read_text().strip().split("\n")
    assert len(csv_lines) == 2


def test_generate_uses_paths_recorded_in_checkpoint(trained, tmp_path):
    _, _, ckpt, _ = trained
    out = tmp_path / "gen2"
    code = main(["generate", "--checkpoint", ckpt, "--out", str(out),
                 "--m", "2", "--ntes", "5"])
    assert code == 0
    assert (out / "cfs.csv").exists()


def test_generate_temperature_zero_rows_equal_inputs(trained, tmp_path):
    data, schema, ckpt, _ = trained
    out = tmp_path / "t0"
    code = main(["generate", "--checkpoint", ckpt, "--data", data,
                 "--schema", schema, "--out", str(out),
                 "--m", "3", "--ntes", "6", "--temperature", "0"])
    assert code == 0
    with open(out / "inputs.csv", newline="") as fh:
        inputs = {r["input_id"]: r for r in csv.DictReader(fh)}
    with open(out / "cfs.csv", newline="") as fh:
        cf_rows = list(csv.DictReader(fh))
    cat_cols = ("race", "gender", "workclass", "education", "marital_status",
                "occupation")
    for row in cf_rows:
        base = inputs[row["input_id"]]
        for col in cat_cols:
            assert row[col] == base[col]
        assert float(row["age"]) == pytest.approx(float(base["age"]), abs=1e-6)


def test_sweep_writes_csv(trained, tmp_path):
    data, schema, ckpt, _ = trained
    out = tmp_path / "sweep"
    code = main(["sweep", "--checkpoint", ckpt, "--data", data, "--schema", schema,
                 "--out", str(out), "--axis", "temperature", "--values", "0.5,1",
                 "--m", "4", "--ntes", "6"])
    assert code == 0
    lines = (out / "sweep.csv").read_text().strip().split("\n")
    assert lines[0].startswith("temperature,")
    assert len(lines) == 3


def test_missing_required_flags_exit_nonzero(capsys):
    code = main(["train"])
    assert code == 2
    assert "error[" in capsys.readouterr().err


def test_bad_checkpoint_path_exit_nonzero(capsys):
    code = main(["generate", "--checkpoint", "/nonexistent/x.json"])
    assert code == 2


def test_evaluate_missing_artifacts_exit_nonzero(tmp_path, capsys):
    code = main(["evaluate", "--artifacts", str(tmp_path), "--out", str(tmp_path)])
    assert code == 2
    assert "error[bad_data]" in capsys.readouterr().err
