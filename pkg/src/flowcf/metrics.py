"""Evaluation metrics for generated counterfactual sets.

Sign conventions follow the evaluation protocol: diversity metrics negate
mean pairwise cosine similarity (so -1.0 means every sample identical),
proximity negates mean Euclidean distance (0 is perfect), validity is the
fraction of strict probability improvements, and run time is seconds per
input. Diversity and proximity live in the encoded standardized space; fix
and monotonicity accuracy compare raw decoded values.

Pairwise cosines are computed as 1 - ||u_j - u_k||^2 / 2 on normalized
rows: algebraically identical to the dot-product form, but exact for
bitwise-equal rows, which pins the duplicated-set case to exactly -1.0.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import MetricError


def _unit_rows(X: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0.0):
        raise MetricError(f"zero-norm vector in {what}; cosine is undefined")
    return X / norms[:, None]


def _pairwise_cosines(X: np.ndarray, what: str) -> np.ndarray:
    """Cosine similarity of all unordered row pairs (j < k), clipped to
    [-1, 1]."""
    m = X.shape[0]
    if m < 2:
        raise MetricError(f"{what} needs at least 2 vectors, got {m}")
    U = _unit_rows(np.asarray(X, dtype=np.float64), what)
    out = []
    for j in range(m - 1):
        d2 = np.sum((U[j + 1:] - U[j]) ** 2, axis=1)
        out.append(1.0 - 0.5 * d2)
    return np.clip(np.concatenate(out), -1.0, 1.0)


def inner_diversity(cf_sets: Sequence[np.ndarray]) -> tuple[float, np.ndarray]:
    """Negated mean within-set pairwise cosine, averaged over inputs.
    Returns (value, per-input values)."""
    per_input = np.array([-float(_pairwise_cosines(s, "inner diversity").mean())
                          for s in cf_sets])
    return float(per_input.mean()), per_input


def outer_diversity(cf_sets: Sequence[np.ndarray]) -> tuple[float, np.ndarray]:
    """Negated mean pairwise cosine between per-input mean vectors.
    Returns (value, per-pair values)."""
    if len(cf_sets) < 2:
        raise MetricError(f"outer diversity needs >= 2 inputs, got {len(cf_sets)}")
    means = np.vstack([np.asarray(s, dtype=np.float64).mean(axis=0) for s in cf_sets])
    per_pair = -_pairwise_cosines(means, "outer diversity")
    return float(per_pair.mean()), per_pair


def proximity(inputs: np.ndarray, cf_sets: Sequence[np.ndarray]) -> tuple[float, np.ndarray]:
    """Negated mean Euclidean distance from each sample to its input.
    Returns (value, per-input values)."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    if len(cf_sets) != inputs.shape[0]:
        raise MetricError(f"proximity: {inputs.shape[0]} inputs vs {len(cf_sets)} sets")
    per_input = np.array([
        -float(np.linalg.norm(np.asarray(s) - inputs[i], axis=1).mean())
        for i, s in enumerate(cf_sets)])
    return float(per_input.mean()), per_input


def validity(test_probs: np.ndarray, cf_probs: Sequence[np.ndarray]) -> tuple[float, np.ndarray]:
    """Fraction of samples whose probability strictly exceeds the input's.
    Returns (value, per-input fractions)."""
    test_probs = np.asarray(test_probs, dtype=np.float64)
    if len(cf_probs) != len(test_probs):
        raise MetricError(f"validity: {len(test_probs)} inputs vs {len(cf_probs)} sets")
    per_input = np.array([
        float(np.mean(np.asarray(p) - test_probs[i] > 0.0))
        for i, p in enumerate(cf_probs)])
    return float(per_input.mean()), per_input


def run_time(total_seconds: float, n_inputs: int) -> float:
    """Wall-clock seconds per input (generation only, excludes training)."""
    if n_inputs < 1:
        raise MetricError(f"run time needs >= 1 input, got {n_inputs}")
    return float(total_seconds) / n_inputs


def _constrained_fraction(inputs: Mapping[str, np.ndarray],
                          cfs: Mapping[str, np.ndarray],
                          features: Sequence[str], strict_increase: bool,
                          what: str) -> float:
    if not features:
        raise MetricError(f"{what} needs at least one constrained feature")
    hits, count = 0, 0
    for name in features:
        base = np.asarray(inputs[name]).reshape(-1, 1)
        cf = np.asarray(cfs[name])
        if cf.shape[0] != base.shape[0]:
            raise MetricError(f"{what}: input/sample count mismatch on '{name}'")
        ok = (cf > base) if strict_increase else (cf == base)
        hits += int(ok.sum())
        count += ok.size
    return hits / count


def fix_accuracy(inputs: Mapping[str, np.ndarray], cfs: Mapping[str, np.ndarray],
                 features: Sequence[str]) -> float:
    """Fraction of (input, sample, feature) triples whose raw value is
    exactly preserved. `cfs[name]` has shape (N, M)."""
    return _constrained_fraction(inputs, cfs, features, False, "fix accuracy")


def monotonicity_accuracy(inputs: Mapping[str, np.ndarray],
                          cfs: Mapping[str, np.ndarray],
                          features: Sequence[str]) -> float:
    """Fraction of triples with a strict raw-scale increase."""
    return _constrained_fraction(inputs, cfs, features, True, "monotonicity accuracy")


@dataclass
class EncodingStats:
    """Prediction spread summary used by the encoding comparison: mean input
    probability, mean sample probability, and the standard deviation of the
    per-input mean sample probability."""

    mean_test_prob: float
    mean_cf_prob: float
    std_cf_prob: float

    def to_dict(self) -> dict:
        return {"mean_test_prob": self.mean_test_prob,
                "mean_cf_prob": self.mean_cf_prob,
                "std_cf_prob": self.std_cf_prob}


def encoding_report(test_probs: np.ndarray, cf_probs: Sequence[np.ndarray]) -> EncodingStats:
    test_probs = np.asarray(test_probs, dtype=np.float64)
    per_input_mean = np.array([float(np.mean(p)) for p in cf_probs])
    return EncodingStats(float(test_probs.mean()), float(per_input_mean.mean()),
                         float(per_input_mean.std()))


def two_sample_t(a: Sequence[float], b: Sequence[float]) -> tuple[float, float]:
    """Welch two-sample t statistic and degrees of freedom."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) < 2 or len(b) < 2:
        raise MetricError("t statistic needs >= 2 samples per group")
    na, nb = len(a), len(b)
    va, vb = a.var(ddof=1), b.var(ddof=1)
    diff = a.mean() - b.mean()
    se2 = va / na + vb / nb
    if se2 == 0.0:  # both groups constant
        stat = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return stat, float(na + nb - 2)
    dof = se2 ** 2 / ((va / na) ** 2 / (na - 1) + (vb / nb) ** 2 / (nb - 1))
    return float(diff / math.sqrt(se2)), float(dof)


@dataclass
class MetricsReport:
    """Aggregate evaluation: point values with per-input (or per-pair, for
    outer diversity) standard deviations."""

    inner_diversity: float
    outer_diversity: float
    proximity: float
    validity: float
    seconds_per_input: float
    inner_diversity_std: float
    outer_diversity_std: float
    proximity_std: float
    validity_std: float
    n_inputs: int
    m_per_input: int
    fix_accuracy: float | None = None
    monotonicity_accuracy: float | None = None
    encoding: EncodingStats | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "inner_diversity": self.inner_diversity,
            "inner_diversity_std": self.inner_diversity_std,
            "outer_diversity": self.outer_diversity,
            "outer_diversity_std": self.outer_diversity_std,
            "proximity": self.proximity,
            "proximity_std": self.proximity_std,
            "validity": self.validity,
            "validity_std": self.validity_std,
            "seconds_per_input": self.seconds_per_input,
            "n_inputs": self.n_inputs,
            "m_per_input": self.m_per_input,
        }
        if self.fix_accuracy is not None:
            d["fix_accuracy"] = self.fix_accuracy
        if self.monotonicity_accuracy is not None:
            d["monotonicity_accuracy"] = self.monotonicity_accuracy
        if self.encoding is not None:
            d.update(self.encoding.to_dict())
        d.update(self.extra)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def csv_header(self) -> str:
        return ",".join(self.to_dict())

    def csv_row(self) -> str:
        return ",".join(repr(v) if isinstance(v, float) else str(v)
                        for v in self.to_dict().values())


def compute_report(inputs_encoded: np.ndarray, cf_encoded: Sequence[np.ndarray],
                   test_probs: np.ndarray, cf_probs: Sequence[np.ndarray],
                   elapsed_seconds: float, **extras) -> MetricsReport:
    """Assemble the full report from encoded arrays and probabilities."""
    id_val, id_per = inner_diversity(cf_encoded)
    od_val, od_per = outer_diversity(cf_encoded)
    p_val, p_per = proximity(inputs_encoded, cf_encoded)
    v_val, v_per = validity(test_probs, cf_probs)
    return MetricsReport(
        inner_diversity=id_val,
        outer_diversity=od_val,
        proximity=p_val,
        validity=v_val,
        seconds_per_input=run_time(elapsed_seconds, len(cf_encoded)),
        inner_diversity_std=float(id_per.std()),
        outer_diversity_std=float(od_per.std()),
        proximity_std=float(p_per.std()),
        validity_std=float(v_per.std()),
        n_inputs=len(cf_encoded),
        m_per_input=int(np.asarray(cf_encoded[0]).shape[0]),
        encoding=encoding_report(test_probs, cf_probs),
        **extras,
    )
