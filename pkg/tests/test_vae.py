"""Tests for the graph VAE: encoder, decoder, KL, ELBO and the regularized loss"""

import numpy as np
import pytest

from src.constraints.penalties import compatibility_constraints, molecular_constraints
from src.core.errors import SchemaError
from src.core.models import GraphSchema, ModelConfig, RegularizationConfig
from src.core.tensor import Node, backward, constant, leaf
from src.graphs.model import GraphOneHot, random_graph
from src.vae.model import (
    STD_FLOOR,
    LatentSample,
    build_params,
    decode,
    elbo,
    encode,
    kl_divergence,
    regularized_loss,
    reparameterize,
    sample_prior,
    synthetic_count,
)

from helpers import hardwire_decoder, numeric_gradient, relative_error

SCHEMA = GraphSchema(max_nodes=3, node_types=2, edge_types=1)
TINY = ModelConfig(latent_dim=2, hidden=[4], prior_trainable=True)


@pytest.fixture
def params():
    return build_params(SCHEMA, TINY, np.random.default_rng(0), init_scale=0.3)


@pytest.fixture
def graphs():
    rng = np.random.default_rng(1)
    return [random_graph(SCHEMA, rng, edge_prob=0.5) for _ in range(4)]


class TestBuildParams:
    def test_init_std(self):
        config = ModelConfig(latent_dim=100, hidden=[100])
        params = build_params(SCHEMA, config, np.random.default_rng(3), init_scale=0.02)
        std = params.decoder[0].weight.value.std()
        assert abs(std - 0.02) < 0.002

    def test_standard_normal_prior(self, params):
        assert np.all(params.prior_mean.value == 0.0)
        assert np.all(params.prior_log_var.value == 0.0)

    def test_same_seed_same_params(self):
        a = build_params(SCHEMA, TINY, np.random.default_rng(5))
        b = build_params(SCHEMA, TINY, np.random.default_rng(5))
        for name, p in a.named_parameters().items():
            assert np.array_equal(p.value, b.named_parameters()[name].value)

    def test_frozen_prior_not_trainable(self):
        config = ModelConfig(latent_dim=2, hidden=[4], prior_trainable=False)
        params = build_params(SCHEMA, config, np.random.default_rng(0))
        assert "prior.mean" not in params.parameters()
        assert "prior.mean" in params.named_parameters()


class TestEncoder:
    def test_shapes_and_positive_variance(self, params, graphs):
        mu, var = encode(graphs[0], params)
        assert mu.shape == (2,)
        assert var.shape == (2,)
        assert np.all(var.value >= STD_FLOOR**2)
        mu_b, var_b = encode(graphs, params)
        assert mu_b.shape == (4, 2)
        assert np.allclose(mu_b.value[0], mu.value)

    def test_deterministic(self, params, graphs):
        assert np.array_equal(encode(graphs[1], params)[0].value, encode(graphs[1], params)[0].value)

    def test_schema_mismatch(self, params):
        other = GraphOneHot.empty(GraphSchema(max_nodes=4, node_types=2, edge_types=1))
        with pytest.raises(SchemaError):
            encode(other, params)


class TestSampling:
    def test_reparameterize_small_variance(self):
        mu = constant([0.5, -1.0])
        sample = reparameterize(mu, constant([1e-12, 1e-12]), np.random.default_rng(0))
        assert np.allclose(sample.z.value, mu.value, atol=1e-5)
        assert sample.source == "posterior"

    def test_same_seed_same_z(self, params):
        a = sample_prior(params, np.random.default_rng(9), count=3)
        b = sample_prior(params, np.random.default_rng(9), count=3)
        assert np.array_equal(a.z.value, b.z.value)

    def test_prior_mean(self, params):
        params.prior_mean.value = np.array([1.0, -2.0])
        params.prior_log_var.value = np.log(np.array([0.25, 4.0]))
        z = sample_prior(params, np.random.default_rng(0), count=10_000).z.value
        s = np.array([0.5, 2.0])
        assert np.all(np.abs(z.mean(axis=0) - params.prior_mean.value) < 3 * s / 100)


class TestDecoder:
    def test_output_is_valid_graph_model(self, params):
        m = decode(sample_prior(params, np.random.default_rng(1), count=5), params)
        assert m.F.shape == (5, 3, 3)
        assert m.E.shape == (5, 3, 3, 2)
        m.validate()

    def test_single_latent(self, params):
        m = decode(constant([0.1, -0.3]), params)
        assert m.batch_shape == ()
        m.validate()

    def test_gradient_wrt_z(self, params):
        weights = np.random.default_rng(4).normal(size=(3, 3, 2))

        def value(z):
            return (decode(z, params).E * weights).sum() + decode(z, params).F[..., 1].sum()

        z0 = np.array([0.3, -0.7])
        z = leaf(z0)
        analytic = backward(value(z))[z]
        numeric = numeric_gradient(lambda v: value(Node(v)).item(), z0)
        assert relative_error(analytic, numeric) < 1e-4


class TestKL:
    def test_identical_gaussians(self, params):
        kl = kl_divergence(constant([0.0, 0.0]), constant([1.0, 1.0]), params)
        assert kl.item() == pytest.approx(0.0)

    def test_one_dimensional_hand_value(self):
        config = ModelConfig(latent_dim=1, hidden=[2])
        params = build_params(SCHEMA, config, np.random.default_rng(0))
        assert kl_divergence(constant([1.0]), constant([1.0]), params).item() == pytest.approx(0.5)

    def test_nonnegative(self, params):
        rng = np.random.default_rng(2)
        for _ in range(50):
            params.prior_mean.value = rng.normal(size=2)
            params.prior_log_var.value = rng.normal(size=2)
            mu, var = constant(rng.normal(size=2)), constant(rng.uniform(0.05, 3.0, size=2))
            assert kl_divergence(mu, var, params).item() >= -1e-12


class TestElbo:
    def test_batch_shape(self, params, graphs):
        assert elbo(graphs, params, np.random.default_rng(0)).shape == (4,)
        assert elbo(graphs[0], params, np.random.default_rng(0)).shape == ()

    def test_matches_hand_computation(self):
        schema = GraphSchema(max_nodes=2, node_types=1, edge_types=1)
        config = ModelConfig(latent_dim=2, hidden=[3], prior_trainable=False)
        params = build_params(schema, config, np.random.default_rng(7), init_scale=0.5)
        g = GraphOneHot.from_labels(schema, [1, 1], [(0, 1, 1)])

        def dense(x, layer):
            return x @ layer.weight.value + layer.bias.value

        def softmax(x):
            e = np.exp(x - x.max(axis=-1, keepdims=True))
            return e / e.sum(axis=-1, keepdims=True)

        x = np.concatenate([g.F, g.E.reshape(2, -1)], axis=1).reshape(-1).astype(float)
        out = dense(np.maximum(dense(x, params.encoder[0]), 0.0), params.encoder[1])
        mu, sigma = out[:2], np.exp(out[2:] / 2)
        eps = np.random.default_rng(11).standard_normal(2)
        z = mu + sigma * eps
        logits = dense(np.maximum(dense(z, params.decoder[0]), 0.0), params.decoder[1])
        F = softmax(logits[:4].reshape(2, 2))
        pair = softmax(logits[4:])
        log_lik = np.log(F[0, 1]) + np.log(F[1, 1]) + np.log(pair[1])
        kl = 0.5 * np.sum(sigma**2 + mu**2 - 1.0 - np.log(sigma**2))
        expected = log_lik - kl

        reg = RegularizationConfig(families=["valence"], weights={"valence": 0.0})
        spec = molecular_constraints(schema, [1], [1])
        terms = regularized_loss([g], params, spec, reg, np.random.default_rng(11))
        assert elbo(g, params, np.random.default_rng(11)).item() == pytest.approx(expected, rel=1e-10)
        assert terms.total.item() == pytest.approx(-expected, rel=1e-10)


class TestRegularizedLoss:
    """Loss composition and gradients"""

    def test_zero_weights_equal_negative_elbo(self, params, graphs):
        spec = compatibility_constraints(SCHEMA, [[0, 1], [1, 0]])
        reg = RegularizationConfig(families=["valence", "compatibility"], weights={"valence": 0.0, "compatibility": 0.0})
        terms = regularized_loss(graphs, params, spec, reg, np.random.default_rng(3))
        expected = -elbo(graphs, params, np.random.default_rng(3)).value.mean()
        assert terms.total.item() == expected
        assert terms.regularizer == 0.0

    def test_no_families_is_plain_vae(self, params, graphs):
        spec = compatibility_constraints(SCHEMA, [[0, 1], [1, 0]])
        terms = regularized_loss(graphs, params, spec, RegularizationConfig(), np.random.default_rng(3))
        assert terms.penalties == {}
        assert terms.total.item() == pytest.approx(terms.kl - terms.reconstruction)

    @pytest.mark.parametrize("weight", [0.0, 0.25])
    def test_kl_weight_scales_only_the_objective(self, params, graphs, weight):
        spec = compatibility_constraints(SCHEMA, [[0, 1], [1, 0]])
        full = regularized_loss(graphs, params, spec, RegularizationConfig(), np.random.default_rng(3))
        warm = regularized_loss(graphs, params, spec, RegularizationConfig(), np.random.default_rng(3), kl_weight=weight)
        assert warm.neg_elbo == full.neg_elbo
        assert warm.kl == full.kl
        assert warm.total.item() == pytest.approx(weight * warm.kl - warm.reconstruction)

    def test_satisfied_decoder_adds_nothing(self, params, graphs):
        spec = compatibility_constraints(SCHEMA, [[0, 1], [1, 0]])
        hardwire_decoder(params, node_label=1, edge_label=0)
        reg = RegularizationConfig(families=["valence", "compatibility"], weights={"valence": 5.0, "compatibility": 5.0})
        terms = regularized_loss(graphs, params, spec, reg, np.random.default_rng(0))
        assert terms.regularizer == pytest.approx(0.0, abs=1e-9)

    def test_violating_decoder_is_penalized(self, params, graphs):
        spec = compatibility_constraints(SCHEMA, [[0, 1], [1, 0]])
        hardwire_decoder(params, node_label=1, edge_label=1)
        reg = RegularizationConfig(families=["compatibility"], weights={"compatibility": 2.0})
        terms = regularized_loss(graphs, params, spec, reg, np.random.default_rng(0))
        # three incompatible type-1 pairs at 1 - alpha each
        assert terms.penalties["compatibility"] == pytest.approx(3 * 0.75, rel=1e-6)
        assert terms.regularizer == pytest.approx(2 * 3 * 0.75, rel=1e-6)

    @pytest.mark.parametrize(
        "reg,expected",
        [
            (RegularizationConfig(synthetic_z="per_example"), 8),
            (RegularizationConfig(synthetic_z="per_batch"), 1),
            (RegularizationConfig(penalty_form="rms", rms_samples=5), 5),
        ],
    )
    def test_synthetic_count(self, reg, expected):
        assert synthetic_count(8, reg) == expected

    @pytest.mark.parametrize("form", ["ramp", "rms"])
    @pytest.mark.parametrize("second", ["connectivity", "compatibility"])
    def test_gradient_matches_finite_differences(self, params, graphs, second, form):
        if second == "connectivity":
            spec = molecular_constraints(SCHEMA, [1, 2], [1])
        else:
            spec = compatibility_constraints(SCHEMA, [[0, 1], [1, 0]])
        reg = RegularizationConfig(
            families=["valence", second], weights={"valence": 1.0, second: 0.5},
            penalty_form=form, rms_samples=3,
        )
        parameters = params.parameters()
        grads = backward(regularized_loss(graphs, params, spec, reg, np.random.default_rng(6)).total)

        for name, p in parameters.items():
            original = p.value.copy()

            def loss_at(value):
                p.value = value
                return regularized_loss(graphs, params, spec, reg, np.random.default_rng(6)).total.item()

            numeric = numeric_gradient(loss_at, original, step=1e-6)
            p.value = original
            assert relative_error(grads.get(p, np.zeros_like(original)), numeric, floor=1e-6) < 1e-3, name

    def test_latent_sample_carries_seed(self, params):
        sample = sample_prior(params, np.random.default_rng(0), seed=42)
        assert isinstance(sample, LatentSample)
        assert sample.seed == 42
        assert sample.source == "prior"
