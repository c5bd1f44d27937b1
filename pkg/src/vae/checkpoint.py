"""Checkpoint files.

A checkpoint is a JSON document: a header (format version, schema, latent
size, hidden widths, prior flag, constraint configuration, seed) followed by
every named parameter as {"shape": [...], "data": [...]}. Floats are written
with repr precision so a save/load cycle is bit-exact.
"""

import json
import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.core.errors import ParseError, SchemaError
from src.core.filestore import FileStore, WriteResult
from src.core.models import ConstraintSpec, GraphSchema, ModelConfig
from src.core.tensor import constant, leaf

from .model import Dense, VaeParams, build_params

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class ArrayRecord(BaseModel):
    shape: list[int]
    data: list[float]


class Checkpoint(BaseModel):
    """On-disk layout of a checkpoint"""
    version: int = CHECKPOINT_VERSION
    graph_schema: GraphSchema = Field(alias="schema")
    latent_dim: int
    hidden: list[int]
    prior_trainable: bool = True
    constraints: Optional[ConstraintSpec] = None
    seed: Optional[int] = None
    epoch: Optional[int] = None
    parameters: dict[str, ArrayRecord]

    model_config = ConfigDict(populate_by_name=True)


def to_checkpoint(
    params: VaeParams,
    constraints: Optional[ConstraintSpec] = None,
    seed: Optional[int] = None,
    epoch: Optional[int] = None,
) -> Checkpoint:
    return Checkpoint(
        graph_schema=params.schema,
        latent_dim=params.latent_dim,
        hidden=params.hidden,
        prior_trainable=params.prior_trainable,
        constraints=constraints,
        seed=seed,
        epoch=epoch,
        parameters={
            name: ArrayRecord(shape=list(p.shape), data=p.value.reshape(-1).tolist())
            for name, p in params.named_parameters().items()
        },
    )


def dumps_checkpoint(checkpoint: Checkpoint) -> bytes:
    payload = checkpoint.model_dump(mode="json", by_alias=True)
    return (json.dumps(payload, indent=None, separators=(",", ":")) + "\n").encode("utf-8")


def save_checkpoint(
    path: Path,
    params: VaeParams,
    constraints: Optional[ConstraintSpec] = None,
    seed: Optional[int] = None,
    epoch: Optional[int] = None,
    store: Optional[FileStore] = None,
) -> WriteResult:
    store = store or FileStore(Path(path).parent)
    result = store.safe_write(Path(path).name, dumps_checkpoint(to_checkpoint(params, constraints, seed, epoch)))
    logger.debug("checkpoint %s sha256=%s", result["path"], result["sha256"][:12])
    return result


def _array(name: str, record: ArrayRecord) -> np.ndarray:
    expected = int(np.prod(record.shape)) if record.shape else 1
    if len(record.data) != expected:
        raise ParseError(
            f"{len(record.data)} values for shape {record.shape}", field=f"parameters.{name}.data"
        )
    return np.asarray(record.data, dtype=np.float64).reshape(record.shape)


def from_checkpoint(checkpoint: Checkpoint) -> VaeParams:
    """
    Rebuild VaeParams from a parsed checkpoint.

    Raises:
        ParseError: On unsupported versions or missing/mis-shaped arrays
    """
    if checkpoint.version != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {checkpoint.version}", field="version")
    config = ModelConfig(
        latent_dim=checkpoint.latent_dim,
        hidden=checkpoint.hidden,
        prior_trainable=checkpoint.prior_trainable,
    )
    template = build_params(checkpoint.graph_schema, config, np.random.default_rng(0))
    make_prior = leaf if checkpoint.prior_trainable else constant

    def load(name: str, like: tuple) -> np.ndarray:
        if name not in checkpoint.parameters:
            raise ParseError(f"missing parameter '{name}'", field=f"parameters.{name}")
        value = _array(name, checkpoint.parameters[name])
        if value.shape != like:
            raise ParseError(
                f"parameter '{name}' has shape {value.shape}, expected {like}",
                field=f"parameters.{name}.shape",
            )
        return value

    def layers(prefix: str, template_layers: list[Dense]) -> list[Dense]:
        return [
            Dense(
                weight=leaf(load(f"{prefix}.{i}.weight", layer.weight.shape)),
                bias=leaf(load(f"{prefix}.{i}.bias", layer.bias.shape)),
            )
            for i, layer in enumerate(template_layers)
        ]

    return VaeParams(
        schema=checkpoint.graph_schema,
        encoder=layers("encoder", template.encoder),
        decoder=layers("decoder", template.decoder),
        prior_mean=make_prior(load("prior.mean", template.prior_mean.shape)),
        prior_log_var=make_prior(load("prior.log_var", template.prior_log_var.shape)),
        prior_trainable=checkpoint.prior_trainable,
    )


def loads_checkpoint(data: bytes) -> Checkpoint:
    try:
        payload: Any = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"invalid checkpoint JSON: {exc}") from None
    try:
        return Checkpoint.model_validate(payload)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = ".".join(str(part) for part in first.get("loc", ())) or None
        raise ParseError(first.get("msg", str(exc)), field=field) from None


def load_checkpoint(path: Path, schema: Optional[GraphSchema] = None) -> tuple[VaeParams, Checkpoint]:
    """
    Read a checkpoint file.

    Args:
        path: Checkpoint file
        schema: When given, the checkpoint's schema must equal it

    Raises:
        FileNotFoundError: If path does not exist
        ParseError: On malformed content
        SchemaError: On a schema mismatch
    """
    checkpoint = loads_checkpoint(Path(path).read_bytes())
    if schema is not None and checkpoint.graph_schema != schema:
        raise SchemaError(
            f"checkpoint schema {checkpoint.graph_schema.model_dump()} does not match {schema.model_dump()}"
        )
    return from_checkpoint(checkpoint), checkpoint
