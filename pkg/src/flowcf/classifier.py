"""Binary MLP classifier over encoded feature rows.

Three hidden dense layers (ReLU + dropout between layers, the last hidden
width 64) feeding a single sigmoid unit; trained with Adam on binary
cross-entropy. After training the model is frozen: prediction runs in
evaluation mode (dropout off) and is deterministic, but stays
differentiable with respect to its *input* when invoked inside a
recorded graph, which is how the generation losses see it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Parameter, Var, backward
from .errors import DataError, ShapeError

PROB_CLAMP = 1e-7


@dataclass
class ClassifierConfig:
    hidden: tuple[int, ...] = (128, 64, 64)
    dropout: float = 0.5
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0


class BinaryClassifier:
    """f(x) in (0,1). Construction gives untrained (seeded) weights; use
    :func:`train_classifier` for a fitted model."""

    def __init__(self, in_dim: int, config: ClassifierConfig | None = None):
        self.in_dim = in_dim
        self.config = config or ClassifierConfig()
        rng = np.random.default_rng(self.config.seed)
        dims = (in_dim, *self.config.hidden, 1)
        self.params: list[Parameter] = []
        for i in range(len(dims) - 1):
            fan_in = dims[i]
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(dims[i], dims[i + 1]))
            self.params.append(Parameter(w, f"clf.w{i}"))
            self.params.append(Parameter(np.zeros((1, dims[i + 1])), f"clf.b{i}"))

    def _forward(self, x, weights, rng=None, training=False):
        n_layers = len(weights) // 2
        h = x
        for i in range(n_layers - 1):
            h = ad.relu(h @ weights[2 * i] + weights[2 * i + 1])
            h = ad.dropout(h, self.config.dropout, rng=rng, training=training)
        logits = h @ weights[-2] + weights[-1]
        return ad.sigmoid(logits)

    def _check_width(self, width: int):
        if width != self.in_dim:
            raise ShapeError(f"classifier expects width {self.in_dim}, got {width}")

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Evaluation-mode probabilities for an (N, K) array."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        self._check_width(X.shape[1])
        return self._forward(X, [p.data for p in self.params]).reshape(-1)

    def predict_graph(self, x: Var, rng=None, training=False, trainable=False) -> Var:
        """Probabilities as a graph node. With trainable=False the weights
        enter as constants, so gradients reach the input only."""
        self._check_width(x.data.shape[1])
        weights = self.params if trainable else [p.data for p in self.params]
        return self._forward(x, weights, rng=rng, training=training)

    def accuracy(self, X: np.ndarray, y: np.ndarray, threshold: float = 0.5) -> float:
        return float(np.mean((self.predict(X) >= threshold) == (np.asarray(y) == 1.0)))


def bce_loss(probs: Var, targets: np.ndarray) -> Var:
    p = ad.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    t = np.asarray(targets, dtype=np.float64).reshape(-1, 1)
    return -(t * ad.log(p) + (1.0 - t) * ad.log(1.0 - p)).mean()


@dataclass
class TrainTrace:
    epoch_losses: list[float] = field(default_factory=list)


def train_classifier(X: np.ndarray, y: np.ndarray,
                     config: ClassifierConfig | None = None
                     ) -> tuple[BinaryClassifier, TrainTrace]:
    """Fit on the encoded training matrix; deterministic for a fixed seed."""
    config = config or ClassifierConfig()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise DataError("training matrix contains non-finite values")
    classes = np.unique(y)
    if len(classes) < 2:
        raise DataError(f"labels contain a single class: {classes.tolist()}")

    model = BinaryClassifier(X.shape[1], config)
    opt = Adam(model.params, lr=config.lr)
    rng = np.random.default_rng(config.seed + 1)
    trace = TrainTrace()
    n = len(y)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            probs = model.predict_graph(Var(X[idx]), rng=rng, training=True,
                                        trainable=True)
            loss = bce_loss(probs, y[idx])
            opt.reset_grads()
            backward(loss)
            opt.step()
            batch_losses.append(float(loss.data))
        trace.epoch_losses.append(float(np.mean(batch_losses)))
    opt.reset_grads()
    return model, trace
