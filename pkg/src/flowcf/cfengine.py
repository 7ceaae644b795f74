"""Counterfactual flow training and generation.

Training teaches the invertible map a latent space whose neighborhoods
decode to valid, nearby samples: each batch is mapped to latent space,
perturbed with unit Gaussian noise, mapped back, and scored by three loss
terms — negative log-likelihood of the training rows, cross-entropy of the
frozen classifier's output on the perturbed reconstructions against the
positive class, and weighted squared distance back to the originals. An
optional hinge term penalizes decreases on monotone features. The
classifier is frozen throughout: its weights enter the graph as constants
so gradients reach only the flow parameters.

Generation is a single forward/inverse round per input: encode to z, draw
M perturbations with covariance t*I, invert, and attach the classifier
probability and the model log-density of every sample. Each input uses an
independent RNG stream derived from (seed, input index), so fanning inputs
out across workers cannot change the result.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Var, backward
from .classifier import PROB_CLAMP, BinaryClassifier
from .encoding import DecodedBatch, TargetEncoder
from .errors import ConfigError, DivergenceError, NonFiniteError, ShapeError
from .flow import Flow, FlowConfig

ALL_TERMS = ("nll", "validity", "proximity", "monotonic")


@dataclass
class LossWeights:
    """Weights of the combined objective: nll_weight * NLL + validity +
    proximity (+ mon_weight * monotonic hinge)."""

    nll_weight: float = 0.01
    feature_weights: np.ndarray | None = None  # per encoded column, default 1.0
    monotonic_idx: tuple[int, ...] = ()
    mon_weight: float = 1.0
    terms: tuple[str, ...] = ("nll", "validity", "proximity", "monotonic")
    target_class: int = 1  # no paper-backed fixture for 0; kept as a flag

    def __post_init__(self):
        if self.nll_weight < 0:
            raise ConfigError(f"nll weight must be >= 0, got {self.nll_weight}")
        if self.feature_weights is not None:
            self.feature_weights = np.asarray(self.feature_weights, dtype=np.float64)
            if np.any(self.feature_weights <= 0):
                raise ConfigError("all feature weights must be > 0")
        unknown = set(self.terms) - set(ALL_TERMS)
        if unknown:
            raise ConfigError(f"unknown loss terms: {sorted(unknown)}")

    def weights_row(self, width: int) -> np.ndarray:
        if self.feature_weights is None:
            return np.ones((1, width))
        if len(self.feature_weights) != width:
            raise ConfigError(
                f"feature weights have length {len(self.feature_weights)}, expected {width}")
        return self.feature_weights.reshape(1, -1)


@dataclass
class CfTrainConfig:
    epochs: int = 10
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    reduction: str = "mean"  # "mean" (batch-size independent) or "sum"
    nll_train_mode: bool = True  # dropout active on the density pass only


@dataclass
class GenerationConfig:
    m: int = 100
    temperature: float = 1.0
    seed: int = 0
    decode: bool = True

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")


# -- loss terms (run on Vars while training, on ndarrays in tests) -------------

def _reduce(per_row, reduction: str):
    if reduction == "sum":
        return per_row.sum()
    return per_row.mean()


def nll_loss(flow: Flow, x, rng=None, training=False, reduction: str = "mean"):
    """Negative log-likelihood of the batch under the flow."""
    lp = flow.log_prob(x, rng=rng, training=training)
    if not isinstance(lp, Var) and not np.all(np.isfinite(lp)):
        raise NonFiniteError("non-finite log-density in nll term")
    return _reduce(-lp, reduction)


def validity_loss(classifier: BinaryClassifier, x_cf, target_class: int = 1,
                  reduction: str = "mean"):
    """Cross-entropy of the classifier output against the desired class,
    clamped away from 0/1 before the log."""
    if isinstance(x_cf, Var):
        p = classifier.predict_graph(x_cf)
    else:
        p = classifier.predict(x_cf).reshape(-1, 1)
    p = ad.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    log_lik = ad.log(p) if target_class == 1 else ad.log(1.0 - p)
    return _reduce(-log_lik, reduction)


def proximity_loss(x, x_cf, weights_row, reduction: str = "mean"):
    """Weighted squared distance per row: ||w * (x - x_cf)||^2."""
    x_data = x.data if isinstance(x, Var) else np.asarray(x)
    cf_data = x_cf.data if isinstance(x_cf, Var) else np.asarray(x_cf)
    if x_data.shape != cf_data.shape:
        raise ShapeError(f"proximity: shapes {x_data.shape} and {cf_data.shape} differ")
    diff = ad.mul(x - x_cf, weights_row)
    return _reduce(ad.square(diff).sum(axis=1), reduction)


def monotonic_loss(x, x_cf, idx: tuple[int, ...]):
    """Hinge on monotone features: mean over rows and features of
    max(x - x_cf, 0); zero when no feature is constrained."""
    if not idx:
        return 0.0
    d = ad.take_cols(x, idx) - ad.take_cols(x_cf, idx)
    return ad.relu(d).mean()  # mean over N * |idx| entries == the 1/(|D|N) sum


def total_loss(parts: dict, weights: LossWeights):
    """nll_weight * nll + validity + proximity + mon_weight * monotonic,
    over whichever terms are present."""
    total = None

    def acc(t, term):
        return term if t is None else t + term

    if "nll" in parts:
        total = acc(total, weights.nll_weight * parts["nll"])
    if "validity" in parts:
        total = acc(total, parts["validity"])
    if "proximity" in parts:
        total = acc(total, parts["proximity"])
    if "monotonic" in parts:
        total = acc(total, weights.mon_weight * parts["monotonic"])
    if total is None:
        raise ConfigError("no loss terms enabled")
    return total


# -- training -------------------------------------------------------------------

@dataclass
class CfTrainTrace:
    epoch_totals: list[float] = field(default_factory=list)
    epoch_terms: list[dict[str, float]] = field(default_factory=list)


def train_cf_flow(X: np.ndarray, classifier: BinaryClassifier | None,
                  flow_config: FlowConfig | None = None,
                  loss_weights: LossWeights | None = None,
                  train_config: CfTrainConfig | None = None
                  ) -> tuple[Flow, CfTrainTrace]:
    """Train the flow on the encoded training matrix.

    Per batch: one density pass for the NLL term (train mode if configured),
    then an evaluation-mode generation branch — forward, add unit Gaussian
    noise, invert — feeding the validity/proximity/monotonic terms. One
    backward pass over the summed objective, one Adam step. Training noise
    is always unit variance; the generation temperature plays no role here.
    """
    X = np.asarray(X, dtype=np.float64)
    flow_config = flow_config or FlowConfig()
    weights = loss_weights or LossWeights()
    cfg = train_config or CfTrainConfig()

    terms = tuple(t for t in weights.terms if t != "monotonic" or weights.monotonic_idx)
    needs_cf = any(t in terms for t in ("validity", "proximity", "monotonic"))
    if "validity" in terms and classifier is None:
        raise ConfigError("validity term requires a classifier")

    n, k = X.shape
    flow = Flow(k, flow_config)
    opt = Adam(flow.params, lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed + 2)
    w_row = weights.weights_row(k)
    trace = CfTrainTrace()

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        batch_totals, batch_terms = [], {t: [] for t in terms}
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            xb = X[idx]
            x = Var(xb)
            try:
                parts = {}
                if "nll" in terms:
                    parts["nll"] = nll_loss(flow, x, rng=rng,
                                            training=cfg.nll_train_mode,
                                            reduction=cfg.reduction)
                if needs_cf:
                    z, _ = flow.forward(x)
                    eps = rng.standard_normal(xb.shape)
                    x_cf = flow.inverse(z + eps)
                    if "validity" in terms:
                        parts["validity"] = validity_loss(
                            classifier, x_cf, weights.target_class, cfg.reduction)
                    if "proximity" in terms:
                        parts["proximity"] = proximity_loss(x, x_cf, w_row, cfg.reduction)
                    if "monotonic" in terms:
                        parts["monotonic"] = monotonic_loss(x, x_cf, weights.monotonic_idx)
                loss = total_loss(parts, weights)
                opt.reset_grads()
                backward(loss)
                opt.step()
            except NonFiniteError as e:
                raise DivergenceError(
                    f"training diverged at epoch {epoch}, batch {b}: {e}") from e
            batch_totals.append(float(loss.data))
            for t in terms:
                val = parts[t]
                batch_terms[t].append(float(val.data) if isinstance(val, Var) else float(val))
        trace.epoch_totals.append(float(np.mean(batch_totals)))
        trace.epoch_terms.append({t: float(np.mean(v)) for t, v in batch_terms.items()})
    opt.reset_grads()
    return flow, trace


# -- generation -------------------------------------------------------------------

@dataclass
class CFSet:
    """M counterfactual samples for one input, with model scores."""

    input_encoded: np.ndarray
    input_prob: float
    cfs_encoded: np.ndarray
    probs: np.ndarray
    log_probs: np.ndarray
    decoded: DecodedBatch | None = None

    def require_decoded(self) -> DecodedBatch:
        if self.decoded is None:
            raise ConfigError("raw output requested but decoding was disabled")
        return self.decoded

    def order_by_likelihood(self) -> np.ndarray:
        """Indices sorting the samples by log-density, most likely first."""
        return np.argsort(-self.log_probs, kind="stable")


def input_rng(seed: int, index: int) -> np.random.Generator:
    """Independent per-input stream; schedule-independent under fan-out."""
    return np.random.default_rng(np.random.SeedSequence((seed, index)))


def generate_from_encoded(flow: Flow, classifier: BinaryClassifier,
                          X: np.ndarray, config: GenerationConfig,
                          decoder: TargetEncoder | None = None) -> list[CFSet]:
    """Algorithm core on already-encoded rows; pure given its arguments."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    input_probs = classifier.predict(X)
    scale = np.sqrt(config.temperature)
    out = []
    for i in range(X.shape[0]):
        rng = input_rng(config.seed, i)
        z, _ = flow.forward(X[i:i + 1])
        eps = scale * rng.standard_normal((config.m, X.shape[1]))
        x_cf = flow.inverse(z + eps)
        probs = classifier.predict(x_cf)
        log_probs = flow.log_prob(x_cf)
        decoded = decoder.inverse(x_cf) if decoder is not None else None
        out.append(CFSet(X[i].copy(), float(input_probs[i]), x_cf, probs,
                         log_probs, decoded))
    return out


def generate_cfs(flow: Flow, classifier: BinaryClassifier, encoder,
                 test_table, config: GenerationConfig) -> tuple[list[CFSet], float]:
    """Encode raw test rows, generate M samples per input, decode if asked.
    Returns the sets and the wall-clock seconds spent (for the runtime
    metric; excludes any training)."""
    X = encoder.transform(test_table)
    decoder = None
    if config.decode:
        if not isinstance(encoder, TargetEncoder):
            raise ConfigError("decoding requires the target encoder")
        decoder = encoder
    t0 = time.perf_counter()
    sets = generate_from_encoded(flow, classifier, X, config, decoder)
    return sets, time.perf_counter() - t0
