"""Shared test utilities."""

import numpy as np


def randomize(flow, seed=0, scale=0.3):
    """Give an (identity-initialized) flow non-trivial parameters. Weights
    are fan-in scaled so activations stay O(1) through the deep stacks (a
    wild random stack saturates tanh and defeats finite-difference
    oracles); any parameter values keep the coupling stack invertible."""
    rng = np.random.default_rng(seed)
    for p in flow.params:
        if p.name.endswith(".bound"):
            p.data[:] = 1.0 + rng.normal(0.0, 0.1 * scale, p.data.shape)
        elif p.data.ndim == 2 and p.data.shape[0] > 1:  # weight matrix
            fan_in = p.data.shape[0]
            p.data[:] = rng.normal(0.0, scale / np.sqrt(fan_in), p.data.shape)
        else:  # bias rows / base means
            p.data[:] = rng.normal(0.0, 0.3 * scale, p.data.shape)
    return flow
