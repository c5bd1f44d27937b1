"""Process-level configuration and experiment file loading"""
import os
from pathlib import Path
from typing import Any, Optional, Sequence

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from src.core.errors import ConfigError
from src.core.models import ExperimentConfig

load_dotenv()

# ========================================
# Environment defaults
# ========================================
OUTPUT_DIR = Path(os.getenv("GRAPHVAE_OUTPUT_DIR", "runs"))
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
DEFAULT_SEED = int(os.getenv("GRAPHVAE_SEED", "0"))

# ========================================
# Presets shipped with the repository
# ========================================
CONFIG_DIR = Path(__file__).parent / "configs"
PRESETS = {
    "compat": CONFIG_DIR / "compat.yaml",
    "molecule": CONFIG_DIR / "molecule.yaml",
    "molecule_zinc_weights": CONFIG_DIR / "molecule_zinc_weights.yaml",
}


def parse_override(item: str) -> tuple[list[str], Any]:
    """
    Parse one `section.key=value` override; the value is read as YAML so
    numbers, booleans and lists keep their types.

    Raises:
        ConfigError: If the item has no '=' or an empty key
    """
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override '{item}' is not of the form section.key=value")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"override '{item}': {exc}") from None
    return key.strip().split("."), value


def apply_overrides(data: dict[str, Any], overrides: Sequence[str]) -> dict[str, Any]:
    for item in overrides:
        path, value = parse_override(item)
        node = data
        for part in path[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override '{item}': '{part}' is not a section")
            node = child
        node[path[-1]] = value
    return data


def load_experiment(
    path: Optional[Path] = None,
    overrides: Sequence[str] = (),
    task: Optional[str] = None,
) -> ExperimentConfig:
    """
    Load an experiment YAML file (or the preset for `task` when no file is
    given), apply `section.key=value` overrides and validate.

    Raises:
        ConfigError: Missing file, malformed YAML or invalid values
    """
    if path is None and task is not None:
        path = PRESETS.get(task)
    data: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping at top level")
    if task is not None:
        data["task"] = task
    apply_overrides(data, overrides)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}") from None
