"""Evaluation protocol: % Valid, % Novel, % Recon, denoising accuracy, mean
ELBO and latent-space walks.

Decoding is always deterministic (argmax per row and fiber) and done once
per latent vector. Graph matching uses canonical forms unless exact matching
is requested; graphs whose canonicalization is too expensive fall back to
exact matching and are counted in `MatchStats`.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Literal, Optional, Sequence

import numpy as np

from src.constraints.oracles import is_valid
from src.core.errors import ConfigError
from src.core.models import ConstraintSpec, EvalConfig, MetricsReport, RegularizationConfig, Task
from src.core.tensor import constant
from src.graphs.canonical import MatchStats, graph_key
from src.graphs.model import GraphBatch, GraphOneHot, argmax_decode_batch
from src.vae.model import VaeParams, decode, elbo, encode, prior_std

logger = logging.getLogger(__name__)

CHUNK = 500

# Benchmark evaluation protocol; departures end up in the report.
PROTOCOL_SAMPLES = 1000
PROTOCOL_ENCODES = 10
PROTOCOL_HOLDOUT = 5000

ALL_METRICS: tuple[str, ...] = ("valid", "novel", "recon", "elbo")


def _chunks(items: Sequence, size: int = CHUNK) -> Iterable[Sequence]:
    for start in range(0, len(items), size):
        yield items[start:start + size]


def decode_latents(params: VaeParams, z: np.ndarray) -> list[GraphOneHot]:
    """argmax-decode each row of z"""
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    graphs: list[GraphOneHot] = []
    for block in _chunks(z):
        graphs.extend(argmax_decode_batch(decode(constant(block), params)))
    return graphs


def prior_latents(params: VaeParams, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    eps = rng.standard_normal((n_samples, params.latent_dim))
    return params.prior_mean.value + prior_std(params).value * eps


def posterior_means(params: VaeParams, graphs: Sequence[GraphOneHot]) -> np.ndarray:
    rows = [encode(GraphBatch.of(list(block)), params)[0].value for block in _chunks(graphs)]
    return np.concatenate(rows, axis=0) if rows else np.zeros((0, params.latent_dim))


def sample_graphs(params: VaeParams, n_samples: int, rng: np.random.Generator) -> list[GraphOneHot]:
    """n_samples prior draws, each decoded once"""
    return decode_latents(params, prior_latents(params, n_samples, rng))


def validity_rate(
    graphs: Sequence[GraphOneHot],
    spec: ConstraintSpec,
    task: Task,
    empty_valid: bool = False,
) -> float:
    if not graphs:
        return 0.0
    valid = sum(is_valid(g, spec, task, empty_valid=empty_valid) for g in graphs)
    return 100.0 * valid / len(graphs)


def percent_valid(
    params: VaeParams,
    spec: ConstraintSpec,
    task: Task,
    n_samples: int,
    rng: np.random.Generator,
    empty_valid: bool = False,
) -> float:
    """% of argmax-decoded prior samples that pass the task oracle"""
    return validity_rate(sample_graphs(params, n_samples, rng), spec, task, empty_valid)


def training_index(
    graphs: Iterable[GraphOneHot],
    match: str = "canonical",
    cell_bound: int = 8,
    stats: Optional[MatchStats] = None,
) -> set[bytes]:
    return {graph_key(g, match, cell_bound, stats) for g in graphs}


def percent_novel(
    samples: Sequence[GraphOneHot],
    training_set: Iterable[GraphOneHot],
    match: str = "canonical",
    cell_bound: int = 8,
    stats: Optional[MatchStats] = None,
) -> float:
    """
    % of `samples` (the valid decoded samples) that do not occur in the
    training set up to node permutation. 0 when there are no samples.
    """
    if not samples:
        return 0.0
    index = training_set if isinstance(training_set, set) else training_index(training_set, match, cell_bound, stats)
    novel = sum(graph_key(g, match, cell_bound, stats) not in index for g in samples)
    return 100.0 * novel / len(samples)


def percent_recon(
    params: VaeParams,
    holdout: Sequence[GraphOneHot],
    encodes_per_graph: int,
    rng: np.random.Generator,
    match: str = "canonical",
    cell_bound: int = 8,
    stats: Optional[MatchStats] = None,
) -> float:
    """
    % of holdout graphs reconstructed by at least one of `encodes_per_graph`
    posterior samples. Attempt r uses the same noise whatever the total
    number of attempts, so more attempts never lower the score.
    """
    if not holdout:
        return 0.0
    keys = [graph_key(g, match, cell_bound, stats) for g in holdout]
    means, stds = [], []
    for block in _chunks(holdout):
        mu, var = encode(GraphBatch.of(list(block)), params)
        means.append(mu.value)
        stds.append(np.sqrt(var.value))
    mu, sigma = np.concatenate(means), np.concatenate(stds)

    hit = np.zeros(len(holdout), dtype=bool)
    for _ in range(encodes_per_graph):
        z = mu + sigma * rng.standard_normal(mu.shape)
        for i, g in enumerate(decode_latents(params, z)):
            if not hit[i] and graph_key(g, match, cell_bound, stats) == keys[i]:
                hit[i] = True
    return 100.0 * hit.sum() / len(holdout)


def denoise_eval(
    params: VaeParams,
    corrupted: Sequence[GraphOneHot],
    spec: ConstraintSpec,
    task: Task = Task.COMPAT,
    empty_valid: bool = False,
) -> float:
    """% of corrupted graphs whose posterior-mean reconstruction is valid"""
    if not corrupted:
        return 0.0
    return validity_rate(decode_latents(params, posterior_means(params, corrupted)), spec, task, empty_valid)


def mean_elbo(params: VaeParams, graphs: Sequence[GraphOneHot], rng: np.random.Generator) -> float:
    """Dataset mean of the one-sample ELBO estimate"""
    if not graphs:
        return float("nan")
    total = 0.0
    for block in _chunks(graphs):
        total += float(elbo(GraphBatch.of(list(block)), params, rng).value.sum())
    return total / len(graphs)


@dataclass(frozen=True)
class WalkPoint:
    """
    One decoded point of a latent walk.

    Attributes:
        row: Grid row, or the anchor pair index in interp mode
        col: Grid column, or the interpolation step
        z: Latent vector that was decoded
    """
    row: int
    col: int
    z: np.ndarray
    graph: GraphOneHot
    valid: bool


def _directions(latent_dim: int, rng: np.random.Generator) -> np.ndarray:
    """Two orthonormal directions as columns (the second is 0 in 1-D)"""
    if latent_dim == 1:
        return np.array([[1.0, 0.0]])
    q, _ = np.linalg.qr(rng.standard_normal((latent_dim, 2)))
    return q


def latent_walk(
    params: VaeParams,
    mode: Literal["grid", "interp"],
    anchors: Sequence[GraphOneHot],
    steps: int,
    spec: ConstraintSpec,
    task: Task,
    rng: np.random.Generator,
    step_size: float = 0.5,
    pairs: int = 1,
    empty_valid: bool = False,
) -> list[WalkPoint]:
    """
    grid: (steps+1) x (steps+1) points centred on the posterior mean of
    anchors[0], spaced step_size along two random orthonormal directions.
    interp: steps+1 points on the segment between the posterior means of
    anchors[2p] and anchors[2p+1], for p < pairs.

    Raises:
        ConfigError: On too few anchors or steps < 1
    """
    if steps < 1:
        raise ConfigError("latent walk needs steps >= 1")
    if mode == "grid":
        if not anchors:
            raise ConfigError("grid walk needs one anchor graph")
        center = posterior_means(params, anchors[:1])[0]
        basis = _directions(params.latent_dim, rng)
        offsets = (np.arange(steps + 1) - steps / 2.0) * step_size
        cells = [(r, c) for r in range(steps + 1) for c in range(steps + 1)]
        z = np.array([center + basis @ np.array([offsets[r], offsets[c]]) for r, c in cells])
    elif mode == "interp":
        if len(anchors) < 2 * pairs:
            raise ConfigError(f"interpolation over {pairs} pair(s) needs {2 * pairs} anchors, got {len(anchors)}")
        means = posterior_means(params, anchors[: 2 * pairs])
        ts = np.linspace(0.0, 1.0, steps + 1)
        cells = [(p, i) for p in range(pairs) for i in range(steps + 1)]
        z = np.array([(1.0 - ts[i]) * means[2 * p] + ts[i] * means[2 * p + 1] for p, i in cells])
    else:
        raise ConfigError(f"unknown walk mode '{mode}'")

    graphs = decode_latents(params, z)
    return [
        WalkPoint(row=r, col=c, z=z[k], graph=g, valid=is_valid(g, spec, task, empty_valid=empty_valid))
        for k, ((r, c), g) in enumerate(zip(cells, graphs))
    ]


def _deviations(config: EvalConfig, holdout_size: int, metrics: Sequence[str], stats: MatchStats) -> list[str]:
    notes = ["encoder/decoder are MLPs, not the convolutional backbone of the benchmark setup"]
    if "valid" in metrics or "novel" in metrics:
        if config.n_samples != PROTOCOL_SAMPLES:
            notes.append(f"{config.n_samples} prior samples instead of {PROTOCOL_SAMPLES}")
    if "recon" in metrics:
        if config.encodes_per_graph != PROTOCOL_ENCODES:
            notes.append(f"{config.encodes_per_graph} encodes per holdout graph instead of {PROTOCOL_ENCODES}")
        if holdout_size != PROTOCOL_HOLDOUT:
            notes.append(f"holdout of {holdout_size} graphs instead of {PROTOCOL_HOLDOUT}")
        notes.append("reconstruction counts a success if any of the encodes matches (criterion unstated)")
    if config.match == "exact":
        notes.append("graphs matched by exact tensor equality instead of up to isomorphism")
    if stats.fallbacks:
        notes.append(f"{stats.fallbacks} graph(s) matched exactly because canonicalization was too expensive")
    return notes


def evaluate(
    params: VaeParams,
    spec: ConstraintSpec,
    task: Task,
    config: EvalConfig,
    seed: int,
    training_set: Sequence[GraphOneHot] = (),
    holdout: Sequence[GraphOneHot] = (),
    metrics: Sequence[str] = ("valid", "novel", "recon"),
    checkpoint: str = "",
    dataset: Optional[str] = None,
    regularization: Optional[RegularizationConfig] = None,
) -> MetricsReport:
    """
    Run the requested metrics and bundle them with the protocol. Each metric
    draws from its own child of `seed`, so the set of requested metrics
    does not change any individual number.
    """
    unknown = set(metrics) - set(ALL_METRICS)
    if unknown:
        raise ConfigError(f"unknown metric(s): {', '.join(sorted(unknown))}")
    valid_rng, recon_rng, elbo_rng = (
        np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(3)
    )
    stats = MatchStats()
    results: dict[str, float] = {}

    if "valid" in metrics or "novel" in metrics:
        samples = sample_graphs(params, config.n_samples, valid_rng)
        valid = [g for g in samples if is_valid(g, spec, task, empty_valid=config.empty_graph_valid)]
        if "valid" in metrics:
            results["valid"] = 100.0 * len(valid) / len(samples)
        if "novel" in metrics:
            index = training_index(training_set, config.match, config.cell_bound, stats)
            results["novel"] = percent_novel(valid, index, config.match, config.cell_bound, stats)
            results["valid_samples"] = float(len(valid))
    holdout = list(holdout)[: config.holdout_size]
    if "recon" in metrics:
        results["recon"] = percent_recon(
            params, holdout, config.encodes_per_graph, recon_rng, config.match, config.cell_bound, stats
        )
    if "elbo" in metrics:
        results["elbo"] = mean_elbo(params, holdout or list(training_set), elbo_rng)

    protocol = {
        "n_samples": config.n_samples,
        "encodes_per_graph": config.encodes_per_graph,
        "holdout_size": len(holdout),
        "decode": "argmax, once per latent vector",
        "recon_success": "any-of-k",
        "match": config.match,
        "cell_bound": config.cell_bound,
        "empty_graph_valid": config.empty_graph_valid,
        "alpha": spec.alpha,
        "sharpness": spec.sharpness,
        "seed": seed,
        "canonical_fallbacks": stats.fallbacks,
    }
    if regularization is not None:
        protocol["families"] = list(regularization.families)
        protocol["weights"] = dict(regularization.weights)
        protocol["penalty_form"] = regularization.penalty_form

    return MetricsReport(
        task=task,
        checkpoint=checkpoint,
        dataset=dataset,
        seed=seed,
        metrics=results,
        protocol=protocol,
        deviations=_deviations(config, len(holdout), metrics, stats),
    )
