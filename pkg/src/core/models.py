"""Core Data Models for Experiments

Pydantic models for every piece of configuration and every structured record
the library writes. Invariants live in validators so a bad YAML file fails at
load time with a field-level message.
"""

from enum import Enum
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import SchemaError

# Compatibility matrix of the synthetic node-compatible benchmark, without the
# ghost row/column (five node types).
BENCHMARK_COMPATIBILITY = (
    (0, 1, 1, 1, 0),
    (1, 0, 1, 0, 1),
    (1, 1, 0, 1, 1),
    (1, 0, 1, 0, 0),
    (0, 1, 1, 0, 0),
)

# Toy-molecule atom types and their valences, in node-type order 1..d.
DEFAULT_ATOMS = ("C", "N", "O", "H")
DEFAULT_VALENCES = (4, 3, 2, 1)
# Capacities of single, double and triple bonds (edge types 1..t).
DEFAULT_BOND_CAPACITIES = (1, 2, 3)

FAMILIES = ("valence", "connectivity", "compatibility")


class Task(str, Enum):
    """Which validity notion applies"""
    MOLECULE = "molecule"
    COMPAT = "compat"


class GraphSchema(BaseModel):
    """
    Size limits shared by every graph in an experiment.

    Attributes:
        max_nodes: N, the number of node slots (ghosts pad smaller graphs)
        node_types: d, node labels 1..d (0 marks a ghost)
        edge_types: t, edge labels 1..t (0 marks a missing edge)
    """
    max_nodes: int = Field(8, ge=1)
    node_types: int = Field(5, ge=1)
    edge_types: int = Field(1, ge=1)

    model_config = ConfigDict(frozen=True)

    @property
    def node_width(self) -> int:
        return 1 + self.node_types

    @property
    def edge_width(self) -> int:
        return 1 + self.edge_types

    @property
    def pair_count(self) -> int:
        return self.max_nodes * (self.max_nodes - 1) // 2

    def check(self, node_shape: tuple, edge_shape: tuple) -> None:
        """Raise SchemaError unless trailing array shapes match this schema"""
        n, dw, tw = self.max_nodes, self.node_width, self.edge_width
        if tuple(node_shape[-2:]) != (n, dw) or tuple(edge_shape[-3:]) != (n, n, tw):
            raise SchemaError(
                f"expected F (..., {n}, {dw}) and E (..., {n}, {n}, {tw}), "
                f"got {tuple(node_shape)} and {tuple(edge_shape)}"
            )


class ConstraintSpec(BaseModel):
    """
    Everything the validity penalties and oracles need.

    Attributes:
        edge_capacity: h, capacity of each edge type (index 0 = no edge)
        node_capacity: u, capacity bound of each node type (index 0 = ghost)
        compatibility: D, (1+d)x(1+d) 0/1 matrix with zero ghost row/column;
                       None when the task has no compatibility rule
        alpha: slack of the compatibility constraint, in (0, 1)
        sharpness: a, steepness of the connectivity sigmoid
    """
    edge_capacity: list[float]
    node_capacity: list[float]
    compatibility: Optional[list[list[int]]] = None
    alpha: float = Field(0.25, gt=0.0, lt=1.0)
    sharpness: float = Field(100.0, gt=0.0)

    model_config = ConfigDict(frozen=True)

    @field_validator("edge_capacity", "node_capacity")
    @classmethod
    def _capacity_valid(cls, v: list[float]) -> list[float]:
        if not v or v[0] != 0:
            raise ValueError("capacity of index 0 must be 0")
        if any(c < 0 for c in v):
            raise ValueError("capacities must be nonnegative")
        return v

    @field_validator("compatibility")
    @classmethod
    def _compatibility_valid(cls, v: Optional[list[list[int]]]) -> Optional[list[list[int]]]:
        if v is None:
            return v
        arr = np.asarray(v)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("compatibility matrix must be square")
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("compatibility matrix must be 0/1")
        if not (arr == arr.T).all():
            raise ValueError("compatibility matrix must be symmetric")
        if arr[0].any() or arr[:, 0].any():
            raise ValueError("ghost row and column of the compatibility matrix must be 0")
        return v

    @property
    def h(self) -> np.ndarray:
        return np.asarray(self.edge_capacity, dtype=np.float64)

    @property
    def u(self) -> np.ndarray:
        return np.asarray(self.node_capacity, dtype=np.float64)

    @property
    def D(self) -> Optional[np.ndarray]:
        if self.compatibility is None:
            return None
        return np.asarray(self.compatibility, dtype=np.float64)

    def check_schema(self, schema: GraphSchema) -> None:
        if len(self.edge_capacity) != schema.edge_width:
            raise SchemaError(
                f"edge capacity has {len(self.edge_capacity)} entries, schema needs {schema.edge_width}"
            )
        if len(self.node_capacity) != schema.node_width:
            raise SchemaError(
                f"node capacity has {len(self.node_capacity)} entries, schema needs {schema.node_width}"
            )
        if self.compatibility is not None and len(self.compatibility) != schema.node_width:
            raise SchemaError(
                f"compatibility matrix is {len(self.compatibility)} wide, schema needs {schema.node_width}"
            )


class RegularizationConfig(BaseModel):
    """
    Which penalty families are active and how they are weighted.

    Attributes:
        families: Enabled constraint families
        weights: One weight per family (0 disables the term numerically)
        penalty_form: "ramp" sums g+ of one synthetic sample; "rms" sums
                      sqrt(mean g+^2) over `rms_samples` synthetic samples
        synthetic_z: one synthetic z per batch element or one per update
        rms_samples: Number of synthetic samples for the rms form
    """
    families: list[Literal["valence", "connectivity", "compatibility"]] = Field(default_factory=list)
    weights: dict[str, float] = Field(default_factory=dict)
    penalty_form: Literal["ramp", "rms"] = "ramp"
    synthetic_z: Literal["per_example", "per_batch"] = "per_example"
    rms_samples: int = Field(8, ge=1)

    @field_validator("weights")
    @classmethod
    def _weights_valid(cls, v: dict[str, float]) -> dict[str, float]:
        for family, weight in v.items():
            if family not in FAMILIES:
                raise ValueError(f"unknown constraint family '{family}'")
            if weight < 0:
                raise ValueError(f"weight of '{family}' must be >= 0")
        return v

    def weight(self, family: str) -> float:
        return float(self.weights.get(family, 0.0))

    def scaled(self, factor: float) -> "RegularizationConfig":
        return self.model_copy(update={"weights": {k: v * factor for k, v in self.weights.items()}})


class ModelConfig(BaseModel):
    """MLP encoder/decoder sizes and prior behaviour"""
    latent_dim: int = Field(32, ge=1)
    hidden: list[int] = Field(default_factory=lambda: [256, 256])
    prior_trainable: bool = True

    @field_validator("hidden")
    @classmethod
    def _hidden_valid(cls, v: list[int]) -> list[int]:
        if any(width < 1 for width in v):
            raise ValueError("hidden widths must be positive")
        return v


class TrainConfig(BaseModel):
    """
    Mini-batch training parameters.

    Learning rate, optimizer and epoch counts are not fixed by any reference
    protocol; whatever is used ends up in the run manifest.

    kl_warmup_epochs: the KL term of the training objective is scaled by
    (epoch - 1) / kl_warmup_epochs until it reaches 1 (0 = no warm-up).
    lr_decay: learning rate of epoch e is learning_rate * lr_decay^(e - 1).
    """
    batch_size: int = Field(200, ge=1)
    learning_rate: float = Field(1e-3, gt=0.0)
    optimizer: Literal["sgd", "momentum", "adam"] = "sgd"
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    epochs: int = Field(50, ge=0)
    init_scale: float = Field(0.02, gt=0.0)
    seed: int = 0
    clip_norm: Optional[float] = Field(10.0, gt=0.0)
    kl_warmup_epochs: int = Field(0, ge=0)
    lr_decay: float = Field(1.0, gt=0.0, le=1.0)
    checkpoint_every: int = Field(10, ge=1)
    probe_samples: int = Field(100, ge=0)
    validation_fraction: float = Field(0.0, ge=0.0, lt=1.0)
    regularization: RegularizationConfig = Field(default_factory=RegularizationConfig)


class EvalConfig(BaseModel):
    """Evaluation protocol; defaults follow the benchmark protocol"""
    n_samples: int = Field(1000, ge=1)
    encodes_per_graph: int = Field(10, ge=1)
    holdout_size: int = Field(5000, ge=1)
    match: Literal["canonical", "exact"] = "canonical"
    cell_bound: int = Field(8, ge=1)
    empty_graph_valid: bool = False
    walk_steps: int = Field(8, ge=1)
    walk_step_size: float = Field(0.5, ge=0.0)
    walk_pairs: int = Field(3, ge=1)


class GenerationConfig(BaseModel):
    """Synthetic dataset recipes"""
    count: int = Field(2000, ge=1)
    node_range: tuple[int, int] = (10, 15)
    edge_prob: float = Field(0.4, ge=0.0, le=1.0)
    ring_closure_prob: float = Field(0.2, ge=0.0, le=1.0)
    insertions: tuple[int, int] = (1, 3)
    corrupt_count: int = Field(2000, ge=1)

    @field_validator("node_range", "insertions")
    @classmethod
    def _range_valid(cls, v: tuple[int, int]) -> tuple[int, int]:
        lo, hi = v
        if lo < 0 or hi < lo:
            raise ValueError(f"invalid inclusive range {v}")
        return v


class ConstraintConfig(BaseModel):
    """
    YAML-facing constraint settings, turned into a ConstraintSpec per task.

    Attributes:
        compatibility: d x d matrix without the ghost row/column (compat task)
        valences: Valence per node type (molecule task)
        bond_capacities: Capacity per edge type (molecule task)
        type_names: Display names of node types
    """
    alpha: float = Field(0.25, gt=0.0, lt=1.0)
    sharpness: float = Field(100.0, gt=0.0)
    compatibility: Optional[list[list[int]]] = None
    valences: Optional[list[float]] = None
    bond_capacities: Optional[list[float]] = None
    type_names: Optional[list[str]] = None


class ExperimentConfig(BaseModel):
    """
    One experiment file: schema, constraints, model, training, evaluation
    and data generation. Task-dependent defaults are filled in after
    validation so the manifest always shows the effective values.
    """
    task: Task = Task.COMPAT
    graph_schema: GraphSchema = Field(default_factory=GraphSchema, alias="schema")
    constraints: ConstraintConfig = Field(default_factory=ConstraintConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    training: TrainConfig = Field(default_factory=TrainConfig)
    evaluation: EvalConfig = Field(default_factory=EvalConfig)
    generation: GenerationConfig = Field(default_factory=GenerationConfig)

    model_config = ConfigDict(populate_by_name=True)

    @model_validator(mode="after")
    def _fill_task_defaults(self) -> "ExperimentConfig":
        schema = self.graph_schema
        constraints = self.constraints
        reg = self.training.regularization
        if self.task == Task.COMPAT:
            if constraints.compatibility is None and schema.node_types == len(BENCHMARK_COMPATIBILITY):
                constraints.compatibility = [list(row) for row in BENCHMARK_COMPATIBILITY]
            if not reg.families:
                reg.families = ["valence", "compatibility"]
            if not reg.weights:
                reg.weights = {"valence": 5.0, "compatibility": 5.0}
        else:
            if constraints.valences is None and schema.node_types == len(DEFAULT_VALENCES):
                constraints.valences = list(DEFAULT_VALENCES)
                constraints.type_names = constraints.type_names or list(DEFAULT_ATOMS)
            if constraints.bond_capacities is None and schema.edge_types == len(DEFAULT_BOND_CAPACITIES):
                constraints.bond_capacities = list(DEFAULT_BOND_CAPACITIES)
            if not reg.families:
                reg.families = ["valence", "connectivity"]
            if not reg.weights:
                reg.weights = {"valence": 1.0, "connectivity": 1.0}
        hi = self.generation.node_range[1]
        if hi > schema.max_nodes:
            lo = min(self.generation.node_range[0], schema.max_nodes)
            self.generation.node_range = (lo, schema.max_nodes)
        return self

    def constraint_spec(self) -> ConstraintSpec:
        """Build the ConstraintSpec for this task and schema"""
        from src.constraints.penalties import compatibility_constraints, molecular_constraints

        if self.task == Task.COMPAT:
            if self.constraints.compatibility is None:
                raise SchemaError("compat task needs a compatibility matrix")
            return compatibility_constraints(
                self.graph_schema,
                self.constraints.compatibility,
                alpha=self.constraints.alpha,
                sharpness=self.constraints.sharpness,
            )
        if self.constraints.valences is None or self.constraints.bond_capacities is None:
            raise SchemaError("molecule task needs valences and bond capacities")
        return molecular_constraints(
            self.graph_schema,
            self.constraints.valences,
            self.constraints.bond_capacities,
            alpha=self.constraints.alpha,
            sharpness=self.constraints.sharpness,
        )


class DatasetManifest(BaseModel):
    """Provenance of a generated dataset file"""
    generator: str
    task: Task
    count: int
    seed: int
    graph_schema: GraphSchema = Field(alias="schema")
    parameters: dict[str, Any] = Field(default_factory=dict)
    sha256: str = ""

    model_config = ConfigDict(populate_by_name=True)


class MetricsReport(BaseModel):
    """
    Evaluation results with the protocol that produced them.

    Attributes:
        metrics: Metric name -> value (percentages in 0..100)
        protocol: Every knob the numbers depend on (samples, seeds, alpha,
                  weights, match mode, success criterion, ...)
        deviations: Human-readable differences from the benchmark protocol
    """
    task: Task
    checkpoint: str
    dataset: Optional[str] = None
    seed: int
    metrics: dict[str, float] = Field(default_factory=dict)
    protocol: dict[str, Any] = Field(default_factory=dict)
    deviations: list[str] = Field(default_factory=list)
