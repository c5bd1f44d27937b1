"""Exception hierarchy shared by every sub-package.

The CLI maps these onto exit codes, so new failure modes should subclass one
of the three families below rather than raising bare built-ins.
"""

from typing import Optional


class GraphVAEError(Exception):
    """Base class for all library errors"""


# ---------------------------------------------------------------------------
# Usage / configuration errors (exit code 2)
# ---------------------------------------------------------------------------

class ConfigError(GraphVAEError):
    """Invalid or inconsistent configuration"""


# ---------------------------------------------------------------------------
# Data errors (exit code 3)
# ---------------------------------------------------------------------------

class SchemaError(GraphVAEError):
    """A graph, tensor or checkpoint does not match the configured schema"""


class ParseError(GraphVAEError):
    """
    Malformed dataset or checkpoint content.

    Attributes:
        line: 1-based line number of the offending record (None if unknown)
        field: Dotted field path inside the record (None if unknown)
    """

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        location = []
        if line is not None:
            location.append(f"line {line}")
        if field:
            location.append(f"field '{field}'")
        prefix = f"[{', '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")


# ---------------------------------------------------------------------------
# Runtime errors (exit code 4)
# ---------------------------------------------------------------------------

class ShapeError(GraphVAEError):
    """Operand shapes do not conform for a tensor primitive"""

    def __init__(self, primitive: str, left: tuple, right: tuple, detail: str = ""):
        self.primitive = primitive
        self.left = tuple(left)
        self.right = tuple(right)
        message = f"{primitive}: incompatible shapes {self.left} and {self.right}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class GradientError(GraphVAEError):
    """backward() called on something that is not a scalar"""


class CanonicalizationError(GraphVAEError):
    """Colour refinement left a cell too large to search exhaustively"""


class GenerationError(GraphVAEError):
    """Generator parameters cannot produce any graph"""


class TrainingDivergedError(GraphVAEError):
    """
    Loss or parameters became non-finite during training.

    Attributes:
        epoch: Epoch in which divergence was detected
        batch: Batch index inside the epoch
        last_checkpoint: Path of the last finite checkpoint, if any
    """

    def __init__(self, message: str, epoch: int, batch: int, last_checkpoint: Optional[str] = None):
        self.epoch = epoch
        self.batch = batch
        self.last_checkpoint = last_checkpoint
        detail = f"{message} (epoch {epoch}, batch {batch}"
        detail += f", last finite checkpoint: {last_checkpoint})" if last_checkpoint else ")"
        super().__init__(detail)


EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4


def exit_code_for(error: BaseException) -> int:
    """Map an exception onto the CLI exit code family"""
    if isinstance(error, ConfigError):
        return EXIT_USAGE
    if isinstance(error, (ParseError, SchemaError, FileNotFoundError)):
        return EXIT_DATA
    return EXIT_RUNTIME
