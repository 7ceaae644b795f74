import numpy as np
import pytest

from flowcf.autodiff import Var, backward, finite_diff_check, Parameter
from flowcf.classifier import (BinaryClassifier, ClassifierConfig, bce_loss,
                               train_classifier)
from flowcf.datasets import make_blobs
from flowcf.errors import DataError, ShapeError


def zeroed(in_dim, config=None):
    m = BinaryClassifier(in_dim, config)
    for p in m.params:
        p.data[:] = 0.0
    return m


def test_zero_weights_predict_half():
    m = zeroed(4)
    X = np.random.default_rng(0).normal(size=(10, 4))
    assert np.allclose(m.predict(X), 0.5)


def test_width_mismatch_raises():
    m = zeroed(4)
    with pytest.raises(ShapeError, match="width"):
        m.predict(np.zeros((3, 5)))


def test_predict_repetition_invariant():
    X, y = make_blobs(200, seed=1)
    m, _ = train_classifier(X, y, ClassifierConfig(hidden=(16, 8, 8), epochs=3, seed=2))
    a, b = m.predict(X), m.predict(X)
    assert np.array_equal(a, b)
    assert np.all((a > 0) & (a < 1))


def test_training_reproducible_bit_for_bit():
    X, y = make_blobs(240, seed=3)
    cfg = ClassifierConfig(hidden=(16, 8, 8), epochs=2, seed=5)
    m1, t1 = train_classifier(X, y, cfg)
    m2, t2 = train_classifier(X, y, cfg)
    for p1, p2 in zip(m1.params, m2.params):
        assert np.array_equal(p1.data, p2.data)
    assert t1.epoch_losses == t2.epoch_losses


def test_single_class_labels_rejected():
    X = np.random.default_rng(0).normal(size=(20, 2))
    with pytest.raises(DataError, match="single class"):
        train_classifier(X, np.ones(20))


def test_separable_blobs_holdout_accuracy():
    # oracle: logistic regression reaches >= 0.95 on this data, and so
    # must the MLP
    X, y = make_blobs(600, seed=4, separation=4.0)
    X_tr, y_tr, X_te, y_te = X[:480], y[:480], X[480:], y[480:]
    m, trace = train_classifier(X_tr, y_tr, ClassifierConfig(epochs=10, seed=0))
    assert m.accuracy(X_te, y_te) >= 0.95
    assert trace.epoch_losses[-1] < trace.epoch_losses[0]


def test_monotone_toy_model_increasing_probability():
    # hand-constructed weights: positive weights and biases keep every relu
    # active on the test range, so the response is strictly increasing
    m = zeroed(1, ClassifierConfig(hidden=(4, 4, 4)))
    for p in m.params:
        if p.name.endswith("w0") or p.name.endswith("w1") or p.name.endswith("w2") or p.name.endswith("w3"):
            p.data[:] = 0.3
        else:
            p.data[:] = 1.0  # bias keeps units active for x > -10/3
    xs = np.linspace(-2.0, 2.0, 41).reshape(-1, 1)
    probs = m.predict(xs)
    assert np.all(np.diff(probs) > 0)


def test_input_gradients_match_finite_differences():
    X, y = make_blobs(120, seed=6)
    m, _ = train_classifier(X, y, ClassifierConfig(hidden=(8, 8, 8), epochs=2, seed=1))
    x0 = np.array([[0.3, -0.7]])
    xp = Parameter(x0.copy(), "x")
    errs = finite_diff_check(lambda: m.predict_graph(xp).sum(), [xp], h=1e-5)
    assert errs["x"] < 1e-4


def test_classifier_loss_gradient_check():
    X, y = make_blobs(40, seed=7)
    m = BinaryClassifier(2, ClassifierConfig(hidden=(6, 6, 6), seed=3))

    def f():
        return bce_loss(m.predict_graph(Var(X), trainable=True), y)

    errs = finite_diff_check(f, m.params, h=1e-5)
    assert max(errs.values()) < 1e-4


def test_bce_loss_values():
    probs = Var(np.array([[0.5], [1.0]]))
    # clamped at 1 - 1e-7; mean of (ln 2, ~0)
    val = float(bce_loss(probs, np.array([1.0, 1.0])).data)
    assert val == pytest.approx(np.log(2.0) / 2.0, abs=1e-6)
