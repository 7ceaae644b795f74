import pytest

from flowcf.cfengine import CfTrainConfig, GenerationConfig
from flowcf.classifier import ClassifierConfig
from flowcf.datasets import make_adult
from flowcf.flow import FlowConfig
from flowcf.pipeline import RunConfig, train_bundle


@pytest.fixture(scope="session")
def adult_mid():
    return make_adult(n=2500, seed=7)


@pytest.fixture(scope="session")
def mid_config():
    # shrunk sizes: module tests exercise mechanics, not paper-scale quality
    return RunConfig(
        seed=3,
        k_folds=5,
        classifier=ClassifierConfig(hidden=(64, 32, 32), epochs=5),
        flow=FlowConfig(hidden=32, hidden_layers=4),
        train=CfTrainConfig(epochs=4),
        generation=GenerationConfig(m=20, temperature=1.0, seed=0),
        n_test=25,
    )


@pytest.fixture(scope="session")
def mid_bundle(adult_mid, mid_config):
    bundle, traces = train_bundle(adult_mid.table, adult_mid.y, adult_mid.schema,
                                  mid_config)
    return bundle, traces
