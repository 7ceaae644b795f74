import numpy as np
import pytest

from flowcf.autodiff import Var, finite_diff_check
from flowcf.errors import ConfigError, ShapeError
from flowcf.flow import (Flow, FlowConfig, GaussianMixtureBase,
                         StandardNormalBase, alternating_masks)


from helpers import randomize


def numerical_logdet(flow, x, h=1e-5):
    """Oracle: log|det J| of the forward map by central differences."""
    n, k = x.shape
    J = np.empty((n, k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = h
        zp, _ = flow.forward(x + e)
        zm, _ = flow.forward(x - e)
        J[:, :, j] = (zp - zm) / (2 * h)
    return np.array([np.linalg.slogdet(J[i])[1] for i in range(n)])


class TestIdentityInitialization:
    def test_forward_is_identity_with_zero_logdet(self):
        flow = Flow(4, FlowConfig(seed=1))
        x = np.random.default_rng(0).normal(size=(10, 4))
        z, logdet = flow.forward(x)
        assert np.array_equal(z, x)
        assert np.array_equal(logdet, np.zeros(10))

    def test_inverse_is_identity(self):
        flow = Flow(3, FlowConfig(seed=2))
        z = np.random.default_rng(1).normal(size=(7, 3))
        assert np.array_equal(flow.inverse(z), z)


def test_single_coupling_constant_affine():
    # hand-set constant scale s and translate t on the transformed half
    s_val, t_val = 0.5, -1.25
    flow = Flow(2, FlowConfig(couplings=2, hidden=4, hidden_layers=2, seed=0))
    layer = flow.layers[0]
    assert np.array_equal(layer.mask, [1.0, 0.0])
    layer.scale_net.params[-1].data[0, 1] = np.arctanh(s_val)  # tanh^-1 so s==s_val
    layer.translate_net.params[-1].data[0, 1] = t_val

    x = np.array([[0.7, 2.0]])
    y, logdet = layer.forward(x)
    assert y[0, 0] == pytest.approx(0.7)
    assert y[0, 1] == pytest.approx(2.0 * np.exp(s_val) + t_val, abs=1e-12)
    assert logdet[0] == pytest.approx(s_val, abs=1e-12)
    assert np.allclose(layer.inverse(y), x, atol=1e-12)


class TestInvertibility:
    @pytest.mark.parametrize("k", [2, 8, 19])
    def test_roundtrip_on_random_points(self, k):
        flow = randomize(Flow(k, FlowConfig(seed=3)), seed=k)
        x = np.random.default_rng(5).uniform(-3, 3, size=(500, k))
        z, _ = flow.forward(x)
        back = flow.inverse(z)
        assert np.max(np.abs(back - x)) < 1e-8

    def test_forward_of_inverse(self):
        flow = randomize(Flow(5, FlowConfig(seed=4)), seed=9)
        z = np.random.default_rng(6).normal(size=(100, 5))
        x = flow.inverse(z)
        z2, _ = flow.forward(x)
        assert np.max(np.abs(z2 - z)) < 1e-8


def test_analytic_logdet_matches_numerical_jacobian():
    flow = randomize(Flow(2, FlowConfig(seed=5)), seed=11, scale=0.5)
    x = np.random.default_rng(7).uniform(-2, 2, size=(200, 2))
    _, analytic = flow.forward(x)
    numeric = numerical_logdet(flow, x)
    denom = np.maximum(np.abs(numeric), 1e-6)
    assert np.max(np.abs(analytic - numeric) / denom) < 1e-4


def test_forward_inverse_logdet_antisymmetry():
    # log|det| of inverse at z equals the negative of forward's at x
    flow = randomize(Flow(4, FlowConfig(seed=6)), seed=13)
    x = np.random.default_rng(8).normal(size=(50, 4))
    z, ld_fwd = flow.forward(x)

    h = 1e-5
    n, k = z.shape
    J = np.empty((n, k, k))
    for j in range(k):
        e = np.zeros(k)
        e[j] = h
        J[:, :, j] = (flow.inverse(z + e) - flow.inverse(z - e)) / (2 * h)
    ld_inv = np.array([np.linalg.slogdet(J[i])[1] for i in range(n)])
    assert np.max(np.abs(ld_fwd + ld_inv)) < 1e-4


class TestLogProb:
    def test_identity_flow_standard_normal_at_origin(self):
        flow = Flow(2, FlowConfig(base="normal", seed=0))
        lp = flow.log_prob(np.zeros((1, 2)))
        assert lp[0] == pytest.approx(-np.log(2 * np.pi), abs=1e-12)
        assert lp[0] == pytest.approx(-1.837877, abs=1e-6)

    def test_identity_flow_at_unit_point(self):
        flow = Flow(2, FlowConfig(base="normal", seed=0))
        lp = flow.log_prob(np.array([[1.0, 0.0]]))
        assert lp[0] == pytest.approx(-np.log(2 * np.pi) - 0.5, abs=1e-12)
        assert lp[0] == pytest.approx(-2.337877, abs=1e-6)

    def test_log_prob_equals_base_plus_logdet(self):
        flow = randomize(Flow(3, FlowConfig(seed=7)), seed=17)
        x = np.random.default_rng(9).normal(size=(20, 3))
        z, logdet = flow.forward(x)
        assert np.allclose(flow.log_prob(x), flow.base.log_prob(z) + logdet, atol=1e-12)

    def test_log_prob_theta_gradients(self):
        flow = randomize(Flow(2, FlowConfig(hidden=6, hidden_layers=2, seed=8)),
                         seed=19, scale=0.4)
        x = np.random.default_rng(10).normal(size=(6, 2))
        errs = finite_diff_check(lambda: flow.log_prob(Var(x)).mean(), flow.params)
        assert max(errs.values()) < 1e-3


class TestBaseDensities:
    def test_single_component_mixture_equals_standard_normal(self):
        mix = GaussianMixtureBase(3, 1)
        std = StandardNormalBase(3)
        z = np.random.default_rng(0).normal(size=(50, 3))
        assert np.allclose(mix.log_prob(z), std.log_prob(z), atol=1e-12)

    def test_two_component_density_matches_direct_summation(self):
        mix = GaussianMixtureBase(2, 2)
        mu = 1.0 / np.sqrt(2.0)
        assert np.allclose(mix.means.data, [[mu, mu], [-mu, -mu]])
        z = np.array([[0.0, 0.0], [0.3, -1.2]])

        def pdf(z_row, mean):
            return np.exp(-0.5 * np.sum((z_row - mean) ** 2)) / (2 * np.pi)

        direct = [np.log(0.5 * pdf(r, mix.means.data[0]) + 0.5 * pdf(r, mix.means.data[1]))
                  for r in z]
        assert np.allclose(mix.log_prob(z), direct, atol=1e-12)

    def test_mixture_log_prob_finite_for_far_points(self):
        mix = GaussianMixtureBase(2, 2)
        z = np.array([[50.0, -50.0]])
        assert np.isfinite(mix.log_prob(z)[0])

    def test_sample_mean_of_single_component(self):
        base = GaussianMixtureBase(4, 1)
        draws = base.sample(100_000, np.random.default_rng(3))
        assert np.all(np.abs(draws.mean(axis=0)) < 0.02)

    def test_mixture_sampling_hits_both_components(self):
        mix = GaussianMixtureBase(2, 2)
        mix.means.data[:] = [[6.0, 6.0], [-6.0, -6.0]]
        draws = mix.sample(2000, np.random.default_rng(4))
        frac_pos = np.mean(draws[:, 0] > 0)
        assert 0.4 < frac_pos < 0.6


class TestValidation:
    def test_dim_one_rejected(self):
        with pytest.raises(ConfigError):
            Flow(1)

    def test_masks_alternate_and_cover_all_coordinates(self):
        masks = alternating_masks(5, 3)
        assert np.array_equal(masks[0], [1, 1, 1, 0, 0])
        assert np.array_equal(masks[1], [0, 0, 0, 1, 1])
        assert np.array_equal(masks[2], masks[0])
        transformed = sum(1.0 - m for m in masks)
        assert np.all(transformed > 0)

    def test_width_mismatch_raises(self):
        flow = Flow(4)
        with pytest.raises(ShapeError):
            flow.forward(np.zeros((3, 5)))

    def test_graph_path_matches_eval_path(self):
        flow = randomize(Flow(4, FlowConfig(seed=9)), seed=23)
        x = np.random.default_rng(11).normal(size=(12, 4))
        z_np, ld_np = flow.forward(x)
        z_graph, ld_graph = flow.forward(Var(x))
        assert np.allclose(z_graph.data, z_np, atol=1e-12)
        assert np.allclose(ld_graph.data, ld_np, atol=1e-12)
        lp_np = flow.log_prob(x)
        lp_graph = flow.log_prob(Var(x))
        assert np.allclose(lp_graph.data, lp_np, atol=1e-12)

    def test_evaluation_mode_deterministic_despite_dropout_config(self):
        flow = randomize(Flow(3, FlowConfig(dropout=0.5, seed=10)), seed=29)
        x = np.random.default_rng(12).normal(size=(5, 3))
        a, _ = flow.forward(x)
        b, _ = flow.forward(x)
        assert np.array_equal(a, b)
