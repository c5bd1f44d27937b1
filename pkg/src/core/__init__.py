"""Core primitives: tensors, configuration models, errors and run records"""

from .errors import (
    CanonicalizationError,
    ConfigError,
    GenerationError,
    GradientError,
    GraphVAEError,
    ParseError,
    SchemaError,
    ShapeError,
    TrainingDivergedError,
)
from .models import (
    ConstraintSpec,
    EvalConfig,
    ExperimentConfig,
    GenerationConfig,
    GraphSchema,
    MetricsReport,
    ModelConfig,
    RegularizationConfig,
    Task,
    TrainConfig,
)

__all__ = [
    'CanonicalizationError',
    'ConfigError',
    'ConstraintSpec',
    'EvalConfig',
    'ExperimentConfig',
    'GenerationConfig',
    'GenerationError',
    'GradientError',
    'GraphSchema',
    'GraphVAEError',
    'MetricsReport',
    'ModelConfig',
    'ParseError',
    'RegularizationConfig',
    'SchemaError',
    'ShapeError',
    'Task',
    'TrainConfig',
    'TrainingDivergedError',
]
