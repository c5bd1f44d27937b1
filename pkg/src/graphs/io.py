"""Line-delimited graph datasets and DOT rendering.

One JSON object per line:

    {"n": 3, "labels": [1, 2, 1], "edges": [[0, 1, 1], [1, 2, 1]]}

`n` is the number of leading node slots in use, `labels` has exactly `n`
entries (1..d for real nodes; 0 marks a ghost slot in the middle of a graph),
`edges` holds [i, j, k] triples with i < j < n and k in 1..t. Slots from `n`
to the schema's N are ghosts.
"""

import json
from pathlib import Path
from typing import Iterable, Optional, Sequence

from pydantic import BaseModel, ValidationError, model_validator

from src.core.errors import ParseError, SchemaError
from src.core.filestore import FileStore, WriteResult
from src.core.models import GraphSchema

from .model import GraphOneHot


class GraphRecord(BaseModel):
    """One dataset line"""
    n: int
    labels: list[int]
    edges: list[tuple[int, int, int]] = []

    @model_validator(mode="after")
    def _consistent(self) -> "GraphRecord":
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if len(self.labels) != self.n:
            raise ValueError(f"labels has {len(self.labels)} entries but n={self.n}")
        for i, j, _ in self.edges:
            if not 0 <= i < j < self.n:
                raise ValueError(f"edge [{i}, {j}] needs 0 <= i < j < n")
        return self


def _record_for(g: GraphOneHot) -> GraphRecord:
    labels = g.node_labels()
    edge_labels = g.edge_labels()
    used = [i for i in range(g.max_nodes) if labels[i] != 0 or edge_labels[i].any()]
    n = max(used) + 1 if used else 0
    return GraphRecord(n=n, labels=[int(x) for x in labels[:n]], edges=g.edges())


def serialize(g: GraphOneHot) -> bytes:
    """One dataset line (without newline) for g"""
    record = _record_for(g)
    payload = {"n": record.n, "labels": record.labels, "edges": [list(e) for e in record.edges]}
    return json.dumps(payload, separators=(",", ":")).encode("utf-8")


def _location(error: ValidationError) -> Optional[str]:
    errors = error.errors()
    if not errors:
        return None
    return ".".join(str(part) for part in errors[0].get("loc", ())) or None


def deserialize(data: bytes, schema: GraphSchema, line: Optional[int] = None) -> GraphOneHot:
    """
    Parse one dataset line.

    Raises:
        ParseError: On malformed JSON, missing fields or out-of-range values
    """
    try:
        payload = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"invalid JSON: {exc}", line=line) from None
    try:
        record = GraphRecord.model_validate(payload)
    except ValidationError as exc:
        message = exc.errors()[0].get("msg", str(exc))
        raise ParseError(message, line=line, field=_location(exc)) from None

    if record.n > schema.max_nodes:
        raise ParseError(f"n={record.n} exceeds max_nodes={schema.max_nodes}", line=line, field="n")
    for index, label in enumerate(record.labels):
        if not 0 <= label <= schema.node_types:
            raise ParseError(
                f"node label {label} outside 1..{schema.node_types}", line=line, field=f"labels.{index}"
            )
    for index, (_, _, k) in enumerate(record.edges):
        if not 1 <= k <= schema.edge_types:
            raise ParseError(
                f"edge type {k} outside 1..{schema.edge_types}", line=line, field=f"edges.{index}.2"
            )
    try:
        return GraphOneHot.from_labels(schema, record.labels, record.edges)
    except SchemaError as exc:
        raise ParseError(str(exc), line=line) from None


def dumps_dataset(graphs: Iterable[GraphOneHot]) -> bytes:
    return b"".join(serialize(g) + b"\n" for g in graphs)


def loads_dataset(data: bytes, schema: GraphSchema) -> list[GraphOneHot]:
    """Parse a whole dataset; blank lines are skipped"""
    graphs = []
    for number, raw in enumerate(data.splitlines(), start=1):
        if raw.strip():
            graphs.append(deserialize(raw, schema, line=number))
    return graphs


def write_dataset(path: Path, graphs: Sequence[GraphOneHot], store: Optional[FileStore] = None) -> WriteResult:
    store = store or FileStore(Path(path).parent)
    return store.safe_write(Path(path).name, dumps_dataset(graphs))


def read_dataset(path: Path, schema: GraphSchema) -> list[GraphOneHot]:
    """
    Raises:
        FileNotFoundError: If path does not exist
        ParseError: On the first malformed line
    """
    return loads_dataset(Path(path).read_bytes(), schema)


def to_dot(g: GraphOneHot, name: str = "G", type_names: Optional[Sequence[str]] = None) -> str:
    """Graphviz rendering of the non-ghost part of g"""
    labels = g.node_labels()
    bond_styles = {1: "solid", 2: "bold", 3: "dashed"}
    lines = [f"graph {name} {{"]
    for i in g.active_nodes():
        label = int(labels[i])
        text = type_names[label - 1] if type_names and label - 1 < len(type_names) else str(label)
        lines.append(f'  n{i} [label="{text}"];')
    for i, j, k in g.edges():
        style = bond_styles.get(k, "solid")
        lines.append(f'  n{i} -- n{j} [label="{k}", style={style}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
