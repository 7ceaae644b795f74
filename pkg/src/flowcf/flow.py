"""Invertible map between feature space and latent space (RealNVP-style).

Three affine coupling layers with alternating half masks; each layer's
scale/translate nets are small dense stacks whose *final* layers start at
zero, so an untrained flow is exactly the identity with zero
log-determinant. The scale output is squashed by tanh times a learnable
per-coordinate bound to keep 10-epoch training away from exploding
Jacobians. The base density is either a standard normal or a mixture of
spherical normals with learnable means and fixed uniform weights.

Methods accept either plain ndarrays (evaluation: deterministic, no tape,
safe to call concurrently) or autodiff Vars (training: gradients reach the
layer parameters).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Var
from .errors import ConfigError, NonFiniteError, ShapeError

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class FlowConfig:
    couplings: int = 3
    hidden: int = 64
    hidden_layers: int = 6
    dropout: float = 0.1
    base: str = "mixture"  # "mixture" | "normal"
    components: int = 2
    seed: int = 0


class DenseStack:
    """hidden_layers dense layers with ReLU + dropout, then a zero-initialized
    linear output layer (identity contribution at the start of training)."""

    def __init__(self, in_dim: int, hidden: int, out_dim: int, n_hidden: int,
                 dropout: float, rng: np.random.Generator, name: str):
        self.dropout = dropout
        self.params: list[Parameter] = []
        dims = [in_dim] + [hidden] * n_hidden
        for i in range(n_hidden):
            w = rng.normal(0.0, np.sqrt(2.0 / dims[i]), size=(dims[i], dims[i + 1]))
            self.params.append(Parameter(w, f"{name}.w{i}"))
            self.params.append(Parameter(np.zeros((1, dims[i + 1])), f"{name}.b{i}"))
        self.params.append(Parameter(np.zeros((dims[-1], out_dim)), f"{name}.w_out"))
        self.params.append(Parameter(np.zeros((1, out_dim)), f"{name}.b_out"))

    def __call__(self, x, rng=None, training=False):
        weights = self.params if isinstance(x, Var) else [p.data for p in self.params]
        h = x
        for i in range((len(weights) - 2) // 2):
            h = ad.relu(h @ weights[2 * i] + weights[2 * i + 1])
            h = ad.dropout(h, self.dropout, rng=rng, training=training)
        return h @ weights[-2] + weights[-1]


class CouplingLayer:
    """Affine coupling: coordinates under the mask pass through and condition
    an elementwise affine map of the complementary coordinates."""

    def __init__(self, mask: np.ndarray, config: FlowConfig,
                 rng: np.random.Generator, name: str):
        if mask.sum() == 0 or mask.sum() == len(mask):
            raise ConfigError("coupling mask must split coordinates into two nonempty parts")
        self.mask = mask.astype(np.float64)
        k = len(mask)
        self.scale_net = DenseStack(k, config.hidden, k, config.hidden_layers,
                                    config.dropout, rng, f"{name}.scale")
        self.translate_net = DenseStack(k, config.hidden, k, config.hidden_layers,
                                        config.dropout, rng, f"{name}.translate")
        self.scale_bound = Parameter(np.ones((1, k)), f"{name}.bound")

    @property
    def params(self) -> list[Parameter]:
        return self.scale_net.params + self.translate_net.params + [self.scale_bound]

    def _affine(self, masked, use_graph: bool, rng, training):
        bound = self.scale_bound if use_graph else self.scale_bound.data
        free = 1.0 - self.mask
        s = ad.tanh(self.scale_net(masked, rng, training))
        s = ad.mul(ad.mul(s, bound), free)
        t = ad.mul(self.translate_net(masked, rng, training), free)
        return s, t

    def forward(self, x, rng=None, training=False):
        masked = ad.mul(x, self.mask)
        s, t = self._affine(masked, isinstance(x, Var), rng, training)
        y = masked + (1.0 - self.mask) * (x * ad.exp(s) + t)
        return y, s.sum(axis=1)

    def inverse(self, y, rng=None, training=False):
        masked = ad.mul(y, self.mask)
        s, t = self._affine(masked, isinstance(y, Var), rng, training)
        return masked + (1.0 - self.mask) * ((y - t) * ad.exp(-s))


class StandardNormalBase:
    def __init__(self, dim: int):
        self.dim = dim
        self.params: list[Parameter] = []

    def log_prob(self, z):
        return -0.5 * ad.square(z).sum(axis=1) - 0.5 * self.dim * LOG_2PI

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.standard_normal((n, self.dim))


class GaussianMixtureBase:
    """C spherical unit-covariance components, learnable means, fixed uniform
    weights. C=1 degenerates to a (shifted) standard normal."""

    def __init__(self, dim: int, components: int):
        if components < 1:
            raise ConfigError(f"mixture needs >= 1 component, got {components}")
        self.dim = dim
        self.components = components
        # C=1 degenerates to a standard normal; otherwise means start at
        # +/- multiples of 1/sqrt(dim) along the diagonal
        init = np.zeros((components, dim))
        if components > 1:
            for c in range(components):
                sign = 1.0 if c % 2 == 0 else -1.0
                init[c] = sign * (1.0 + c // 2) / np.sqrt(dim)
        self.means = Parameter(init, "base.means")
        self.params = [self.means]

    def log_prob(self, z):
        use_graph = isinstance(z, Var)
        means = self.means if use_graph else self.means.data
        comps = []
        n = z.data.shape[0] if use_graph else np.atleast_2d(z).shape[0]
        for c in range(self.components):
            diff = z - ad.take_row(means, c)
            comps.append((-0.5 * ad.square(diff).sum(axis=1)
                          - 0.5 * self.dim * LOG_2PI).reshape(n, 1))
        stacked = ad.concat(comps, axis=1)
        return ad.logsumexp(stacked, axis=1) - np.log(self.components)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.integers(self.components, size=n)
        return self.means.data[comp] + rng.standard_normal((n, self.dim))


def make_base(kind: str, dim: int, components: int):
    if kind == "normal":
        return StandardNormalBase(dim)
    if kind == "mixture":
        return GaussianMixtureBase(dim, components)
    raise ConfigError(f"unknown base density '{kind}'")


def alternating_masks(dim: int, count: int) -> list[np.ndarray]:
    """First-half / second-half masks, swapped each layer, so every
    coordinate is transformed at least once for count >= 2."""
    if dim < 2:
        raise ConfigError(f"flow needs input width >= 2, got {dim}")
    first = np.zeros(dim)
    first[: (dim + 1) // 2] = 1.0
    return [first if i % 2 == 0 else 1.0 - first for i in range(count)]


class Flow:
    """Coupling stack + base density with exact log-density."""

    def __init__(self, dim: int, config: FlowConfig | None = None):
        self.dim = dim
        self.config = config or FlowConfig()
        rng = np.random.default_rng(self.config.seed)
        masks = alternating_masks(dim, self.config.couplings)
        self.layers = [CouplingLayer(masks[i], self.config, rng, f"flow.c{i}")
                       for i in range(self.config.couplings)]
        self.base = make_base(self.config.base, dim, self.config.components)

    @property
    def params(self) -> list[Parameter]:
        out = []
        for layer in self.layers:
            out.extend(layer.params)
        out.extend(self.base.params)
        return out

    def _check_width(self, arr):
        data = arr.data if isinstance(arr, Var) else np.asarray(arr)
        if data.ndim != 2 or data.shape[1] != self.dim:
            raise ShapeError(f"flow expects (N, {self.dim}) input, got {data.shape}")

    def forward(self, x, rng=None, training=False):
        """x -> (z, log|det J|); the log-determinant accumulates the masked
        scale outputs layer by layer."""
        self._check_width(x)
        logdet = None
        for i, layer in enumerate(self.layers):
            try:
                x, ld = layer.forward(x, rng=rng, training=training)
            except NonFiniteError as e:
                raise NonFiniteError(f"flow forward, coupling layer {i}: {e}") from e
            logdet = ld if logdet is None else logdet + ld
        return x, logdet

    def inverse(self, z, rng=None, training=False):
        self._check_width(z)
        for i, layer in enumerate(reversed(self.layers)):
            try:
                z = layer.inverse(z, rng=rng, training=training)
            except NonFiniteError as e:
                raise NonFiniteError(f"flow inverse, coupling layer {i}: {e}") from e
        return z

    def log_prob(self, x, rng=None, training=False):
        z, logdet = self.forward(x, rng=rng, training=training)
        return self.base.log_prob(z) + logdet

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.inverse(self.base.sample(n, rng))
