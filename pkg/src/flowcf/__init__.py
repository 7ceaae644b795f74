"""Counterfactual explanations for tabular binary classifiers.

An invertible flow learns the training distribution over target-encoded
features jointly with validity and proximity objectives; counterfactual
samples for any input come from one forward/inverse round through the
trained map, with a temperature knob trading proximity for diversity.
"""

from .cfengine import (CfTrainConfig, CFSet, GenerationConfig, LossWeights,
                       generate_cfs, generate_from_encoded, train_cf_flow)
from .checkpoint import TrainedBundle, load_checkpoint, save_checkpoint
from .classifier import BinaryClassifier, ClassifierConfig, train_classifier
from .encoding import (DecodedBatch, OneHotEncoder, Schema, TargetEncoder,
                       load_schema, load_table, save_schema)
from .flow import Flow, FlowConfig
from .metrics import MetricsReport, compute_report
from .pipeline import RunConfig, train_bundle

__version__ = "0.1.0"

__all__ = [
    "BinaryClassifier", "CFSet", "CfTrainConfig", "ClassifierConfig",
    "DecodedBatch", "Flow", "FlowConfig", "GenerationConfig", "LossWeights",
    "MetricsReport", "OneHotEncoder", "RunConfig", "Schema", "TargetEncoder",
    "TrainedBundle", "compute_report", "generate_cfs", "generate_from_encoded",
    "load_checkpoint", "load_schema", "load_table", "save_checkpoint",
    "save_schema", "train_bundle", "train_cf_flow", "train_classifier",
    "__version__",
]
