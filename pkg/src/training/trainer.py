"""Mini-batch training of the regularized graph VAE.

One run: seed everything from TrainConfig.seed, optionally hold out a
validation split, then for every epoch shuffle the data, minimize
`regularized_loss` batch by batch and log the epoch means together with the
validity of a fixed set of prior samples. The KL term can be warmed up
over the first epochs and the learning rate decays geometrically per epoch.
Checkpoints are written every `checkpoint_every` epochs and at the end.

Random streams (all children of the master seed):
  0: parameter init   1: shuffling   2: loss noise   3: validity-check noise
  4: validation split (the validation ELBO of each epoch is seeded by (seed, epoch))
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from src.core.errors import SchemaError, TrainingDivergedError
from src.core.events import EventEmitter
from src.core.filestore import FileStore
from src.core.models import ConstraintSpec, ExperimentConfig, GraphSchema, ModelConfig, TrainConfig
from src.core.tensor import backward
from src.data.datagen import split_dataset
from src.evaluation.metrics import decode_latents, mean_elbo, validity_rate
from src.graphs.model import GraphOneHot
from src.vae.checkpoint import save_checkpoint
from src.vae.model import VaeParams, build_params, prior_std, regularized_loss

from .optim import Optimizer, clip_grad_norm

logger = logging.getLogger(__name__)

LOG_NAME = "train_log.jsonl"
FINAL_CHECKPOINT = "checkpoint.json"


@dataclass
class TrainResult:
    """
    Attributes:
        params: Parameters after the last epoch
        log: One record per epoch (same content as the epoch.completed events)
        checkpoints: Checkpoint files written, in order
        log_path: Training log file, when an output directory was given
    """
    params: VaeParams
    log: list[dict[str, Any]] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)
    log_path: Optional[Path] = None


def init_params(
    schema: GraphSchema,
    model: ModelConfig,
    train: TrainConfig,
    rng: np.random.Generator,
) -> VaeParams:
    """Weights ~ N(0, init_scale^2), zero biases, standard normal prior"""
    return build_params(schema, model, rng, init_scale=train.init_scale)


def kl_weight(epoch: int, warmup_epochs: int) -> float:
    """KL scale for 1-based `epoch`: 0 on the first epoch, rising linearly to 1"""
    if warmup_epochs <= 0:
        return 1.0
    return min(1.0, (epoch - 1) / warmup_epochs)


def _streams(seed: int) -> list[np.random.Generator]:
    return [np.random.default_rng(child) for child in np.random.SeedSequence(seed).spawn(5)]


class _Means:
    """Batch-size weighted running means"""

    def __init__(self):
        self.sums: dict[str, float] = {}
        self.count = 0

    def add(self, values: dict[str, float], weight: int) -> None:
        self.count += weight
        for key, value in values.items():
            self.sums[key] = self.sums.get(key, 0.0) + value * weight

    def result(self) -> dict[str, float]:
        return {key: total / self.count for key, total in self.sums.items()} if self.count else {}


def train(
    dataset: Sequence[GraphOneHot],
    config: ExperimentConfig,
    out_dir: Optional[Path] = None,
    spec: Optional[ConstraintSpec] = None,
    params: Optional[VaeParams] = None,
) -> TrainResult:
    """
    Train a VAE on `dataset`.

    Args:
        dataset: Training graphs (all of config's schema)
        config: Experiment configuration; training and regularization are
                taken from config.training
        out_dir: Directory for train_log.jsonl and checkpoints (nothing is
                 written when None)
        spec: Constraint spec (default: config.constraint_spec())
        params: Starting parameters (default: fresh init from the seed)

    Returns:
        TrainResult

    Raises:
        SchemaError: Empty dataset or graphs of another schema
        TrainingDivergedError: Non-finite loss or parameters
    """
    if not dataset:
        raise SchemaError("training dataset is empty")
    schema = config.graph_schema
    for g in dataset:
        schema.check(g.F.shape, g.E.shape)
    tc = config.training
    reg = tc.regularization
    spec = spec or config.constraint_spec()
    init_rng, shuffle_rng, noise_rng, check_rng, val_rng = _streams(tc.seed)

    params = params or init_params(schema, config.model, tc, init_rng)
    train_set, validation = list(dataset), []
    if tc.validation_fraction > 0:
        train_set, validation = split_dataset(dataset, float(tc.validation_fraction), val_rng)
        if not train_set:
            raise SchemaError("validation split left no training graphs")
    check_eps = check_rng.standard_normal((tc.probe_samples, params.latent_dim))

    parameters = params.parameters()
    optimizer = Optimizer(parameters, kind=tc.optimizer, learning_rate=tc.learning_rate, momentum=tc.momentum)
    store = FileStore(Path(out_dir)) if out_dir is not None else None
    events = EventEmitter(Path(out_dir) / LOG_NAME, run_id="train", truncate=True) if out_dir is not None else None
    result = TrainResult(params=params, log_path=events.log_path if events else None)
    last_checkpoint: Optional[str] = None
    started = time.perf_counter()

    def checkpoint(name: str, epoch: int) -> None:
        nonlocal last_checkpoint
        if store is None:
            return
        written = save_checkpoint(store.resolve(name), params, constraints=spec, seed=tc.seed, epoch=epoch, store=store)
        result.checkpoints.append(written["path"])
        last_checkpoint = str(written["path"])
        if events:
            events.checkpoint_written(epoch, name, written["sha256"])

    def diverged(message: str, epoch: int, batch: int) -> TrainingDivergedError:
        if events:
            events.run_failed(message, epoch=epoch, data={"batch": batch, "last_checkpoint": last_checkpoint})
            events.close()
        return TrainingDivergedError(message, epoch=epoch, batch=batch, last_checkpoint=last_checkpoint)

    if events:
        events.run_started(
            config.model_dump(mode="json", by_alias=True),
            dataset_size=len(train_set),
            parameter_count=int(sum(p.size for p in parameters.values())),
        )
    logger.info(
        "training on %d graphs: %d epochs, batch %d, %s lr=%g, families=%s weights=%s",
        len(train_set), tc.epochs, tc.batch_size, tc.optimizer, tc.learning_rate, reg.families, reg.weights,
    )

    for epoch in range(1, tc.epochs + 1):
        epoch_start = time.perf_counter()
        beta = kl_weight(epoch, tc.kl_warmup_epochs)
        optimizer.learning_rate = tc.learning_rate * tc.lr_decay ** (epoch - 1)
        order = shuffle_rng.permutation(len(train_set))
        means = _Means()
        for batch_index, start in enumerate(range(0, len(order), tc.batch_size)):
            batch = [train_set[i] for i in order[start:start + tc.batch_size]]
            terms = regularized_loss(batch, params, spec, reg, noise_rng, kl_weight=beta)
            loss = terms.total.item()
            if not np.isfinite(loss):
                raise diverged(f"loss became {loss}", epoch, batch_index)

            grads = backward(terms.total)
            named = {name: grads[p] for name, p in parameters.items() if p in grads}
            named, norm = clip_grad_norm(named, tc.clip_norm)
            optimizer.step(named)
            if not params.is_finite():
                raise diverged("parameters became non-finite", epoch, batch_index)

            values = {
                "loss": loss,
                "neg_elbo": terms.neg_elbo,
                "kl": terms.kl,
                "reconstruction": terms.reconstruction,
                "regularizer": terms.regularizer,
                "grad_norm": norm,
            }
            values.update({f"penalty.{family}": v for family, v in terms.penalties.items()})
            means.add(values, len(batch))

        record: dict[str, Any] = {
            "epoch": epoch, **means.result(), "kl_weight": beta, "learning_rate": optimizer.learning_rate,
        }
        if tc.probe_samples:
            z = params.prior_mean.value + prior_std(params).value * check_eps
            record["probe_valid"] = validity_rate(
                decode_latents(params, z), spec, config.task, config.evaluation.empty_graph_valid
            )
        if validation:
            val_seed = np.random.default_rng(np.random.SeedSequence([tc.seed, epoch]))
            record["val_neg_elbo"] = -mean_elbo(params, validation, val_seed)
        wall = time.perf_counter() - epoch_start
        result.log.append({**record, "wall_time_s": wall})
        if events:
            events.epoch_completed(epoch, {k: v for k, v in record.items() if k != "epoch"}, wall)
        logger.info(
            "epoch %d: -elbo=%.4f reg=%.4f probe_valid=%s",
            epoch, record.get("neg_elbo", float("nan")), record.get("regularizer", 0.0),
            f"{record['probe_valid']:.1f}%" if "probe_valid" in record else "n/a",
        )
        if epoch % tc.checkpoint_every == 0 and epoch != tc.epochs:
            checkpoint(f"checkpoint_epoch{epoch:04d}.json", epoch)

    checkpoint(FINAL_CHECKPOINT, tc.epochs)
    if events:
        final = {k: v for k, v in (result.log[-1] if result.log else {}).items() if k != "wall_time_s"}
        events.run_succeeded(tc.epochs, final, time.perf_counter() - started)
        events.close()
    return result
