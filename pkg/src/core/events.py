"""Event Logging System

Emits typed events to ND-JSON (newline-delimited JSON) log files. The
training log of a run is such a file (train_log.jsonl): one record per
event, in order.

Every record carries `ts` (wall clock) and training records carry
`wall_time_s`; these are the only fields that differ between two runs with
the same seed. `strip_timing` removes them before comparing logs.
"""

import json
import math
import sys
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Literal, Optional, TypedDict

if sys.version_info >= (3, 11):
    from typing import NotRequired
else:
    from typing_extensions import NotRequired

TIMING_FIELDS = ("ts", "wall_time_s")


class Event(TypedDict):
    """
    Typed event structure.

    All events include:
    - ts: ISO8601 timestamp
    - level: Event severity (INFO/WARN/ERROR)
    - run_id: Run identifier
    - type: Event type (e.g., 'run.started', 'epoch.completed')

    Optional fields:
    - epoch: Epoch number for per-epoch events
    - data: Additional event-specific data
    """
    ts: str
    level: Literal["INFO", "WARN", "ERROR"]
    run_id: str
    type: str
    epoch: NotRequired[int]
    data: NotRequired[dict[str, Any]]


def _json_safe(value: Any) -> Any:
    """NaN/inf are not JSON; write them as strings"""
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


class EventEmitter:
    """
    Emits structured events to an ND-JSON log file.

    Events are written one-per-line as JSON objects to enable
    streaming analysis and easy parsing.
    """

    def __init__(self, log_path: Path, run_id: str = "run", truncate: bool = False):
        """
        Initialize event emitter.

        Args:
            log_path: Path to the .jsonl file
            run_id: Identifier stamped on every event
            truncate: Start a fresh file instead of appending
        """
        self.log_path = Path(log_path)
        self.run_id = run_id
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        self._log_file = open(self.log_path, "w" if truncate else "a", buffering=1)

    def emit(self, event: dict[str, Any]) -> dict[str, Any]:
        """
        Emit an event to the log.

        Adds the timestamp, run_id and INFO level when absent.

        Raises:
            ValueError: If the event has no 'type'
        """
        if "type" not in event:
            raise ValueError("Event must have a 'type' field")
        record = {
            "ts": event.pop("ts", None) or datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
            "level": event.pop("level", "INFO"),
            "run_id": event.pop("run_id", self.run_id),
            "type": event.pop("type"),
        }
        record.update(_json_safe(event))
        self._log_file.write(json.dumps(record, default=str) + "\n")
        self._log_file.flush()
        return record

    def run_started(self, config: dict[str, Any], dataset_size: int, parameter_count: int):
        self.emit({
            "type": "run.started",
            "config": config,
            "dataset_size": dataset_size,
            "parameters": parameter_count,
        })

    def epoch_completed(self, epoch: int, metrics: dict[str, Any], wall_time_s: float):
        """Emit epoch.completed with the epoch's loss components"""
        self.emit({"type": "epoch.completed", "epoch": epoch, **metrics, "wall_time_s": wall_time_s})

    def checkpoint_written(self, epoch: int, path: str, sha256: str):
        self.emit({"type": "checkpoint.written", "epoch": epoch, "path": path, "sha256": sha256})

    def run_succeeded(self, epochs: int, final: dict[str, Any], wall_time_s: float):
        self.emit({"type": "run.succeeded", "epochs": epochs, "final": final, "wall_time_s": wall_time_s})

    def run_failed(self, error: str, epoch: Optional[int] = None, data: Optional[dict] = None):
        self.emit({
            "type": "run.failed",
            "level": "ERROR",
            "epoch": epoch,
            "error": error,
            "data": data or {},
        })

    def close(self):
        """Close the log file"""
        if getattr(self, "_log_file", None) and not self._log_file.closed:
            self._log_file.close()

    def __del__(self):
        self.close()


@contextmanager
def event_logger(log_path: Path, run_id: str = "run", truncate: bool = False):
    """
    Context manager for event logging.

    Usage:
        with event_logger(Path('runs/train/train_log.jsonl'), truncate=True) as events:
            events.run_started(config, len(dataset), n_params)
            ...
    """
    emitter = EventEmitter(log_path, run_id=run_id, truncate=truncate)
    try:
        yield emitter
    finally:
        emitter.close()


def read_events(log_path: Path) -> list[dict]:
    """
    Read all events from a .jsonl file.

    Returns:
        List of event dicts in file order ([] if the file does not exist)
    """
    log_path = Path(log_path)
    if not log_path.exists():
        return []

    events = []
    with open(log_path, "r") as f:
        for line in f:
            line = line.strip()
            if line:
                events.append(json.loads(line))

    return events


def filter_events(
    events: list[dict],
    event_type: Optional[str] = None,
    epoch: Optional[int] = None,
    level: Optional[str] = None,
) -> list[dict]:
    """Filter events by type, epoch and/or level"""
    filtered = events

    if event_type:
        filtered = [e for e in filtered if e.get("type") == event_type]

    if epoch is not None:
        filtered = [e for e in filtered if e.get("epoch") == epoch]

    if level:
        filtered = [e for e in filtered if e.get("level") == level]

    return filtered


def strip_timing(events: list[dict]) -> list[dict]:
    """Drop wall-clock fields so logs of identical runs compare equal"""
    return [{k: v for k, v in e.items() if k not in TIMING_FIELDS} for e in events]
