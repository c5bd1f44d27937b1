"""Report and latent-walk exports.

A walk is written as one DOT file per decoded graph plus `index.csv`
(row, col, valid, file, z_0 .. z_{L-1}) built with pandas.
"""

import json
import logging
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd

from src.core.filestore import FileStore, WriteResult
from src.core.models import MetricsReport
from src.graphs.io import to_dot

from .metrics import WalkPoint

logger = logging.getLogger(__name__)


def walk_frame(points: Sequence[WalkPoint], files: Sequence[str]) -> pd.DataFrame:
    rows = []
    for point, name in zip(points, files):
        row = {"row": point.row, "col": point.col, "valid": bool(point.valid), "file": name}
        row.update({f"z_{i}": float(v) for i, v in enumerate(point.z)})
        rows.append(row)
    return pd.DataFrame(rows)


def export_walk(
    points: Sequence[WalkPoint],
    store: FileStore,
    type_names: Optional[Sequence[str]] = None,
    prefix: str = "walk",
) -> list[WriteResult]:
    """Write DOT files and the CSV index; returns every WriteResult"""
    results = []
    files = []
    for point in points:
        name = f"{prefix}_r{point.row:02d}_c{point.col:02d}.dot"
        graph_name = f"{prefix}_r{point.row}_c{point.col}"
        results.append(store.safe_write(name, to_dot(point.graph, name=graph_name, type_names=type_names)))
        files.append(name)
    csv = walk_frame(points, files).to_csv(index=False, lineterminator="\n")
    results.append(store.safe_write("index.csv", csv))
    logger.info("exported %d walk graphs to %s", len(points), store.base_dir)
    return results


def dumps_report(report: MetricsReport) -> str:
    return json.dumps(report.model_dump(mode="json"), indent=2) + "\n"


def write_report(report: MetricsReport, path: Path, store: Optional[FileStore] = None) -> WriteResult:
    store = store or FileStore(Path(path).parent)
    return store.safe_write(Path(path).name, dumps_report(report))
