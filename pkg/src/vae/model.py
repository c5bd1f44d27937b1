"""Graph VAE: MLP encoder/decoder, trainable Gaussian prior, ELBO and the
constraint-regularized training loss.

The encoder reads F next to the unfolded E (flattened) and returns a factored
Gaussian q(z|G) = N(mu, sigma^2). The decoder maps z to node-label logits and
to edge-label logits for the N(N-1)/2 upper pairs only; fibers are softmaxed
and then scattered to both (i, j) and (j, i) by a constant 0/1 matrix, with
the diagonal fixed to "no edge". The output is therefore a valid GraphProb by
construction.

The regularizer is evaluated on graphs decoded from synthetic z drawn from
the prior, not from the encoder, so it shapes the whole region the prior puts
mass on.
"""

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence, Union

import numpy as np

from src.core.models import ConstraintSpec, GraphSchema, ModelConfig, RegularizationConfig
from src.core.tensor import (
    Node,
    constant,
    exp,
    floor_at,
    leaf,
    log,
    relu,
    softmax,
    sqrt,
    square,
)
from src.constraints.penalties import regularizer_terms, total_regularizer
from src.graphs.model import GraphBatch, GraphOneHot, GraphProb, log_likelihood

logger = logging.getLogger(__name__)

# sigma and s are floored here before entering the KL term.
STD_FLOOR = 1e-4

GraphInput = Union[GraphOneHot, GraphBatch, Sequence[GraphOneHot]]


@dataclass
class Dense:
    """Affine layer y = x W + b"""
    weight: Node
    bias: Node

    def __call__(self, x: Node) -> Node:
        return x @ self.weight + self.bias

    @property
    def in_features(self) -> int:
        return self.weight.shape[0]

    @property
    def out_features(self) -> int:
        return self.weight.shape[1]


def _mlp(layers: list[Dense], x: Node) -> Node:
    for layer in layers[:-1]:
        x = relu(layer(x))
    return layers[-1](x)


@dataclass
class VaeParams:
    """
    All weights of one model.

    Attributes:
        schema: Graph schema the layers were sized for
        encoder: Dense layers, last one outputs [mu | log sigma^2]
        decoder: Dense layers, last one outputs node then pair logits
        prior_mean: m
        prior_log_var: log s^2
        prior_trainable: False keeps the prior at its current value
    """
    schema: GraphSchema
    encoder: list[Dense]
    decoder: list[Dense]
    prior_mean: Node
    prior_log_var: Node
    prior_trainable: bool = True

    @property
    def latent_dim(self) -> int:
        return self.prior_mean.shape[0]

    @property
    def hidden(self) -> list[int]:
        return [layer.out_features for layer in self.encoder[:-1]]

    def named_parameters(self) -> dict[str, Node]:
        """Every parameter by stable name, trainable or not"""
        named: dict[str, Node] = {}
        for prefix, layers in (("encoder", self.encoder), ("decoder", self.decoder)):
            for index, layer in enumerate(layers):
                named[f"{prefix}.{index}.weight"] = layer.weight
                named[f"{prefix}.{index}.bias"] = layer.bias
        named["prior.mean"] = self.prior_mean
        named["prior.log_var"] = self.prior_log_var
        return named

    def parameters(self) -> dict[str, Node]:
        """Parameters the optimizer updates"""
        return {name: p for name, p in self.named_parameters().items() if p.requires_grad}

    def is_finite(self) -> bool:
        return all(np.isfinite(p.value).all() for p in self.named_parameters().values())


@dataclass(frozen=True)
class LatentSample:
    """
    Attributes:
        z: Node of shape (..., latent_dim)
        source: "posterior" (reparameterized encoder output) or "prior"
        seed: Seed of the generator that drew the noise, when known
    """
    z: Node
    source: Literal["posterior", "prior"]
    seed: Optional[int] = None


def encoder_input_width(schema: GraphSchema) -> int:
    n = schema.max_nodes
    return n * (schema.node_width + n * schema.edge_width)


def decoder_output_width(schema: GraphSchema) -> int:
    return schema.max_nodes * schema.node_width + schema.pair_count * schema.edge_width


def build_params(
    schema: GraphSchema,
    config: ModelConfig,
    rng: np.random.Generator,
    init_scale: float = 0.02,
) -> VaeParams:
    """
    Fresh parameters: weights ~ N(0, init_scale^2), zero biases, prior at
    the standard normal (m = 0, log s^2 = 0).
    """
    def layers(widths: list[int]) -> list[Dense]:
        return [
            Dense(
                weight=leaf(rng.normal(0.0, init_scale, size=(fan_in, fan_out))),
                bias=leaf(np.zeros(fan_out)),
            )
            for fan_in, fan_out in zip(widths[:-1], widths[1:])
        ]

    latent = config.latent_dim
    encoder = layers([encoder_input_width(schema), *config.hidden, 2 * latent])
    decoder = layers([latent, *config.hidden, decoder_output_width(schema)])
    make = leaf if config.prior_trainable else constant
    return VaeParams(
        schema=schema,
        encoder=encoder,
        decoder=decoder,
        prior_mean=make(np.zeros(latent)),
        prior_log_var=make(np.zeros(latent)),
        prior_trainable=config.prior_trainable,
    )


def _as_batch(graphs: GraphInput) -> Union[GraphOneHot, GraphBatch]:
    if isinstance(graphs, (GraphOneHot, GraphBatch)):
        return graphs
    return GraphBatch.of(list(graphs))


def _flat_input(g: Union[GraphOneHot, GraphBatch]) -> np.ndarray:
    if isinstance(g, GraphBatch):
        return g.flat_inputs()
    n = g.max_nodes
    return np.concatenate([g.F, g.E.reshape(n, -1)], axis=1).reshape(-1).astype(np.float64)


def encode(graphs: GraphInput, params: VaeParams) -> tuple[Node, Node]:
    """
    Posterior parameters (mu, sigma^2), each (latent_dim,) for one graph or
    (B, latent_dim) for a batch. sigma is floored at STD_FLOOR.
    """
    g = _as_batch(graphs)
    params.schema.check(g.F.shape, g.E.shape)
    out = _mlp(params.encoder, constant(_flat_input(g)))
    latent = params.latent_dim
    mu = out[..., :latent]
    sigma = floor_at(exp(out[..., latent:] * 0.5), STD_FLOOR)
    return mu, square(sigma)


def reparameterize(
    mu: Node,
    var: Node,
    rng: np.random.Generator,
    seed: Optional[int] = None,
) -> LatentSample:
    """z = mu + sigma * eps with eps ~ N(0, I); differentiable in mu and var"""
    eps = rng.standard_normal(mu.shape)
    return LatentSample(z=mu + sqrt(var) * eps, source="posterior", seed=seed)


def prior_std(params: VaeParams) -> Node:
    return floor_at(exp(params.prior_log_var * 0.5), STD_FLOOR)


def sample_prior(
    params: VaeParams,
    rng: np.random.Generator,
    count: Optional[int] = None,
    seed: Optional[int] = None,
) -> LatentSample:
    """z = m + s * eps, one vector or `count` stacked vectors"""
    shape = (params.latent_dim,) if count is None else (count, params.latent_dim)
    eps = rng.standard_normal(shape)
    return LatentSample(z=params.prior_mean + prior_std(params) * eps, source="prior", seed=seed)


def _scatter_matrix(n: int) -> np.ndarray:
    """(N*N, M) 0/1 matrix sending upper pair p = (i, j) to cells (i, j) and (j, i)"""
    rows, cols = np.triu_indices(n, k=1)
    scatter = np.zeros((n * n, len(rows)))
    pairs = np.arange(len(rows))
    scatter[rows * n + cols, pairs] = 1.0
    scatter[cols * n + rows, pairs] = 1.0
    return scatter


def _diagonal_fibers(n: int, width: int) -> np.ndarray:
    diag = np.zeros((n, n, width))
    diag[np.arange(n), np.arange(n), 0] = 1.0
    return diag


def decode(sample: Union[LatentSample, Node], params: VaeParams) -> GraphProb:
    """
    GraphProb for z of shape (..., latent_dim); leading axes become the
    batch axes of the result.
    """
    z = sample.z if isinstance(sample, LatentSample) else sample
    schema = params.schema
    n, dw, tw = schema.max_nodes, schema.node_width, schema.edge_width
    batch = z.shape[:-1]
    logits = _mlp(params.decoder, z)
    split = n * dw
    F = softmax(logits[..., :split].reshape(batch + (n, dw)), axis=-1)
    pair_probs = softmax(logits[..., split:].reshape(batch + (schema.pair_count, tw)), axis=-1)
    E = (_scatter_matrix(n) @ pair_probs).reshape(batch + (n, n, tw)) + _diagonal_fibers(n, tw)
    return GraphProb(F=F, E=E)


def kl_divergence(mu: Node, var: Node, params: VaeParams) -> Node:
    """
    KL(N(mu, sigma^2) || N(m, s^2)) in closed form, summed over latent
    dimensions:

        1/2 sum_l [log s_l^2 - log sigma_l^2 + (sigma_l^2 + (mu_l - m_l)^2) / s_l^2 - 1]
    """
    prior_var = square(prior_std(params))
    terms = log(prior_var) - log(var) + (var + square(mu - params.prior_mean)) / prior_var - 1.0
    return terms.sum(axis=-1) * 0.5


def elbo(graphs: GraphInput, params: VaeParams, rng: np.random.Generator) -> Node:
    """
    One-sample Monte-Carlo ELBO: -KL(q || p) + log p(G | z), z ~ q(z|G).
    Scalar for one graph, one value per graph for a batch.
    """
    g = _as_batch(graphs)
    mu, var = encode(g, params)
    z = reparameterize(mu, var, rng)
    return log_likelihood(g, decode(z, params)) - kl_divergence(mu, var, params)


@dataclass
class LossTerms:
    """
    Components of one loss evaluation.

    Attributes:
        total: Scalar node to differentiate
        neg_elbo: Batch mean of -ELBO
        kl: Batch mean of the KL term
        reconstruction: Batch mean of log p(G | z)
        regularizer: Weighted penalty sum (0 when no family is enabled)
        penalties: Unweighted penalty per family, as floats
    """
    total: Node
    neg_elbo: float
    kl: float
    reconstruction: float
    regularizer: float
    penalties: dict[str, float] = field(default_factory=dict)


def synthetic_count(batch_size: int, reg: RegularizationConfig) -> int:
    """How many prior samples the regularizer is evaluated on"""
    if reg.penalty_form == "rms":
        return reg.rms_samples
    return batch_size if reg.synthetic_z == "per_example" else 1


def regularized_loss(
    graphs: GraphInput,
    params: VaeParams,
    spec: ConstraintSpec,
    reg: RegularizationConfig,
    rng: np.random.Generator,
    kl_weight: float = 1.0,
) -> LossTerms:
    """
    mean(-ELBO) + sum_family mu_family * penalty_family(decode(z_synthetic)).

    The posterior noise is drawn before the synthetic prior noise, so two
    runs that differ only in the weights consume identical random streams.

    kl_weight scales the KL term inside `total` only (KL warm-up); the
    reported neg_elbo is always the unscaled bound.
    """
    batch = _as_batch(graphs)
    if isinstance(batch, GraphOneHot):
        batch = GraphBatch.of([batch])
    mu, var = encode(batch, params)
    z = reparameterize(mu, var, rng)
    reconstruction = log_likelihood(batch, decode(z, params))
    kl = kl_divergence(mu, var, params)
    neg_elbo = (kl - reconstruction).mean()

    total = neg_elbo if kl_weight == 1.0 else (kl * kl_weight - reconstruction).mean()
    regularizer_value = 0.0
    penalties: dict[str, float] = {}
    if reg.families:
        synthetic = sample_prior(params, rng, count=synthetic_count(len(batch), reg))
        m = decode(synthetic, params)
        terms = regularizer_terms(m, spec, reg)
        regularizer = total_regularizer(m, spec, reg, terms=terms)
        total = total + regularizer
        regularizer_value = regularizer.item()
        penalties = {family: term.item() for family, term in terms.items()}

    return LossTerms(
        total=total,
        neg_elbo=neg_elbo.item(),
        kl=kl.mean().item(),
        reconstruction=reconstruction.mean().item(),
        regularizer=regularizer_value,
        penalties=penalties,
    )
