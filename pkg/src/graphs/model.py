"""Discrete and probabilistic labeled graphs.

A graph over N node slots is a one-hot node-label matrix F (N x (1+d)) and a
one-hot edge-label tensor E (N x N x (1+t)). Column 0 of F marks a ghost
(absent) node, channel 0 of E a missing edge. Graphs are undirected without
self-loops: the upper triangle of E is authoritative and mirrored below, the
diagonal is always "no edge".

The probabilistic counterpart relaxes rows and fibers to probability vectors.
Its arrays are tape nodes so the likelihood and the validity penalties can be
differentiated back into the decoder.
"""

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from src.core.errors import SchemaError
from src.core.models import GraphSchema
from src.core.tensor import Node, as_node, log


def _upper_mask(n: int) -> np.ndarray:
    return np.triu(np.ones((n, n)), k=1)


@dataclass(frozen=True, eq=False)
class GraphOneHot:
    """
    One discrete graph.

    Attributes:
        F: (N, 1+d) one-hot node labels
        E: (N, N, 1+t) one-hot edge labels, symmetric, diagonal "no edge"
    """
    F: np.ndarray
    E: np.ndarray

    # -- construction -------------------------------------------------------

    @classmethod
    def from_labels(
        cls,
        schema: GraphSchema,
        labels: Sequence[int],
        edges: Iterable[tuple[int, int, int]] = (),
    ) -> "GraphOneHot":
        """
        Build a graph from node labels (0 = ghost) and (i, j, k) edge triples.
        Labels shorter than N are padded with ghosts.

        Raises:
            SchemaError: On out-of-range labels or node indices, self-loops
        """
        n, d, t = schema.max_nodes, schema.node_types, schema.edge_types
        if len(labels) > n:
            raise SchemaError(f"{len(labels)} node labels exceed max_nodes={n}")
        node_labels = np.zeros(n, dtype=np.int64)
        for i, label in enumerate(labels):
            if not 0 <= int(label) <= d:
                raise SchemaError(f"node {i} label {label} outside 0..{d}")
            node_labels[i] = int(label)
        edge_labels = np.zeros((n, n), dtype=np.int64)
        for i, j, k in edges:
            i, j, k = int(i), int(j), int(k)
            if i == j:
                raise SchemaError(f"self-loop on node {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise SchemaError(f"edge ({i}, {j}) outside 0..{n - 1}")
            if not 1 <= k <= t:
                raise SchemaError(f"edge ({i}, {j}) type {k} outside 1..{t}")
            edge_labels[i, j] = edge_labels[j, i] = k
        return cls.from_label_arrays(schema, node_labels, edge_labels)

    @classmethod
    def from_label_arrays(
        cls, schema: GraphSchema, node_labels: np.ndarray, edge_labels: np.ndarray
    ) -> "GraphOneHot":
        """Build from an (N,) node-label vector and a symmetric (N, N) edge-label matrix"""
        F = np.eye(schema.node_width, dtype=np.int8)[node_labels]
        edge_labels = np.array(edge_labels, copy=True)
        np.fill_diagonal(edge_labels, 0)
        E = np.eye(schema.edge_width, dtype=np.int8)[edge_labels]
        return cls(F=F, E=E)

    @classmethod
    def empty(cls, schema: GraphSchema) -> "GraphOneHot":
        """All-ghost graph"""
        return cls.from_labels(schema, [])

    # -- views --------------------------------------------------------------

    @property
    def max_nodes(self) -> int:
        return self.F.shape[0]

    @property
    def schema(self) -> GraphSchema:
        return GraphSchema(
            max_nodes=self.F.shape[0],
            node_types=self.F.shape[1] - 1,
            edge_types=self.E.shape[2] - 1,
        )

    def node_labels(self) -> np.ndarray:
        return self.F.argmax(axis=1)

    def edge_labels(self) -> np.ndarray:
        return self.E.argmax(axis=2)

    def edges(self) -> list[tuple[int, int, int]]:
        """(i, j, k) triples with i < j"""
        labels = self.edge_labels()
        rows, cols = np.nonzero(np.triu(labels, k=1))
        return [(int(i), int(j), int(labels[i, j])) for i, j in zip(rows, cols)]

    def active_nodes(self) -> list[int]:
        """Indices of non-ghost nodes"""
        return [int(i) for i in np.nonzero(self.F[:, 0] == 0)[0]]

    def with_edge(self, i: int, j: int, k: int) -> "GraphOneHot":
        labels = self.edge_labels().copy()
        labels[i, j] = labels[j, i] = k
        return GraphOneHot.from_label_arrays(self.schema, self.node_labels(), labels)

    def permute(self, perm: Sequence[int]) -> "GraphOneHot":
        """Relabel so that new node i is old node perm[i]"""
        perm = np.asarray(perm)
        return GraphOneHot(F=self.F[perm], E=self.E[perm][:, perm])

    def validate(self, ghost_consistent: bool = False) -> None:
        """
        Check the structural invariants.

        Raises:
            SchemaError: If a row/fiber is not one-hot, E is asymmetric, has
                         self-loops, or (when requested) a ghost has edges
        """
        if not ((self.F.sum(axis=1) == 1).all() and np.isin(self.F, (0, 1)).all()):
            raise SchemaError("node rows are not one-hot")
        if not ((self.E.sum(axis=2) == 1).all() and np.isin(self.E, (0, 1)).all()):
            raise SchemaError("edge fibers are not one-hot")
        if not np.array_equal(self.E, self.E.transpose(1, 0, 2)):
            raise SchemaError("edge tensor is not symmetric")
        if not (np.diagonal(self.E[:, :, 0]) == 1).all():
            raise SchemaError("self-loops are not allowed")
        if ghost_consistent:
            ghosts = self.F[:, 0] == 1
            if (self.E[ghosts, :, 0] == 0).any():
                raise SchemaError("ghost node has incident edges")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GraphOneHot):
            return NotImplemented
        return np.array_equal(self.F, other.F) and np.array_equal(self.E, other.E)

    def __hash__(self) -> int:
        return hash((self.F.tobytes(), self.E.tobytes()))

    def __repr__(self) -> str:
        labels = self.node_labels().tolist()
        return f"GraphOneHot(labels={labels}, edges={self.edges()})"


@dataclass(frozen=True)
class GraphBatch:
    """Stacked one-hot graphs as float arrays, for batched likelihoods"""
    F: np.ndarray
    E: np.ndarray
    graphs: tuple

    @classmethod
    def of(cls, graphs: Sequence[GraphOneHot]) -> "GraphBatch":
        if not graphs:
            raise SchemaError("cannot stack an empty list of graphs")
        F = np.stack([g.F for g in graphs]).astype(np.float64)
        E = np.stack([g.E for g in graphs]).astype(np.float64)
        return cls(F=F, E=E, graphs=tuple(graphs))

    def __len__(self) -> int:
        return len(self.graphs)

    def flat_inputs(self) -> np.ndarray:
        """
        Encoder input: F next to the unfolded E, N rows of
        (1+d) + N(1+t) columns, flattened per graph.
        """
        b, n = self.F.shape[0], self.F.shape[1]
        unfolded = self.E.reshape(b, n, -1)
        return np.concatenate([self.F, unfolded], axis=2).reshape(b, -1)


@dataclass(frozen=True)
class GraphProb:
    """
    Probabilistic graph model (decoder output).

    Attributes:
        F: Node of shape (..., N, 1+d), rows on the simplex
        E: Node of shape (..., N, N, 1+t), fibers on the simplex, symmetric,
           diagonal fixed to "no edge"
    """
    F: Node
    E: Node

    @classmethod
    def from_arrays(cls, F, E) -> "GraphProb":
        return cls(F=as_node(F), E=as_node(E))

    @property
    def batch_shape(self) -> tuple:
        return self.F.shape[:-2]

    @property
    def max_nodes(self) -> int:
        return self.F.shape[-2]

    def item(self, index: int) -> "GraphProb":
        """Detached single graph from a batch"""
        return GraphProb.from_arrays(self.F.value[index], self.E.value[index])

    def validate(self, tol: float = 1e-9) -> None:
        """
        Raises:
            SchemaError: If any row/fiber leaves the simplex, E is asymmetric
                         or the diagonal is not "no edge"
        """
        F, E = self.F.value, self.E.value
        for name, arr in (("node rows", F), ("edge fibers", E)):
            if (arr < -tol).any() or not np.allclose(arr.sum(axis=-1), 1.0, atol=tol):
                raise SchemaError(f"{name} are not probability vectors")
        if not np.allclose(E, np.swapaxes(E, -2, -3), atol=tol):
            raise SchemaError("edge probabilities are not symmetric")
        n = F.shape[-2]
        diag = E[..., np.arange(n), np.arange(n), :]
        expected = np.zeros(E.shape[-1])
        expected[0] = 1.0
        if not np.allclose(diag, expected, atol=tol):
            raise SchemaError("diagonal fibers must be 'no edge'")


def relax(g: GraphOneHot) -> GraphProb:
    """The degenerate GraphProb that puts all mass on g"""
    return GraphProb.from_arrays(g.F.astype(np.float64), g.E.astype(np.float64))


def log_likelihood(g: Union[GraphOneHot, GraphBatch], m: GraphProb) -> Node:
    """
    log p(g | m) under independent rows and upper-triangle fibers:

        sum_i sum_r F(i,r) log F~(i,r) + sum_{i<j} sum_k E(i,j,k) log E~(i,j,k)

    with probabilities clamped at LOG_CLAMP. Returns a scalar node for a single
    graph or one value per graph for a batch.

    Raises:
        SchemaError: If g and m have different schemas
    """
    gF = np.asarray(g.F, dtype=np.float64)
    gE = np.asarray(g.E, dtype=np.float64)
    if gF.shape[-2:] != m.F.shape[-2:] or gE.shape[-3:] != m.E.shape[-3:]:
        raise SchemaError(
            f"graph shapes {gF.shape[-2:]}/{gE.shape[-3:]} do not match model "
            f"{m.F.shape[-2:]}/{m.E.shape[-3:]}"
        )
    n = gF.shape[-2]
    node_term = (log(m.F) * gF).sum(axis=(-2, -1))
    upper = gE * _upper_mask(n)[:, :, None]
    edge_term = (log(m.E) * upper).sum(axis=(-3, -2, -1))
    return node_term + edge_term


def _categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per vector along the last axis"""
    u = rng.random(probs.shape[:-1])
    cdf = np.cumsum(probs, axis=-1)
    index = (cdf <= u[..., None]).sum(axis=-1)
    return np.minimum(index, probs.shape[-1] - 1)


def _schema_of(m: GraphProb) -> GraphSchema:
    return GraphSchema(
        max_nodes=m.F.shape[-2],
        node_types=m.F.shape[-1] - 1,
        edge_types=m.E.shape[-1] - 1,
    )


def sample(m: GraphProb, rng: np.random.Generator) -> GraphOneHot:
    """Independent categorical draw for every node row and upper-triangle fiber"""
    if m.batch_shape:
        raise SchemaError("sample() takes a single graph model")
    schema = _schema_of(m)
    n = schema.max_nodes
    node_labels = _categorical(m.F.value, rng)
    rows, cols = np.triu_indices(n, k=1)
    edge_labels = np.zeros((n, n), dtype=np.int64)
    drawn = _categorical(m.E.value[rows, cols], rng)
    edge_labels[rows, cols] = drawn
    edge_labels[cols, rows] = drawn
    return GraphOneHot.from_label_arrays(schema, node_labels, edge_labels)


def _argmax_labels(F: np.ndarray, E: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = F.shape[-2]
    node_labels = F.argmax(axis=-1)  # first maximum wins ties
    edge_labels = np.triu(E.argmax(axis=-1), k=1)
    edge_labels = edge_labels + np.swapaxes(edge_labels, -1, -2)
    return node_labels, edge_labels


def argmax_decode(m: GraphProb) -> GraphOneHot:
    """Most likely graph; ties go to the lowest index ("ghost"/"no edge")"""
    if m.batch_shape:
        raise SchemaError("argmax_decode() takes a single graph model, see argmax_decode_batch()")
    node_labels, edge_labels = _argmax_labels(m.F.value, m.E.value)
    return GraphOneHot.from_label_arrays(_schema_of(m), node_labels, edge_labels)


def argmax_decode_batch(m: GraphProb) -> list[GraphOneHot]:
    """argmax_decode over the leading batch axis"""
    schema = _schema_of(m)
    F = m.F.value.reshape((-1,) + m.F.shape[-2:])
    E = m.E.value.reshape((-1,) + m.E.shape[-3:])
    node_labels, edge_labels = _argmax_labels(F, E)
    return [
        GraphOneHot.from_label_arrays(schema, node_labels[b], edge_labels[b])
        for b in range(F.shape[0])
    ]


def random_graph(
    schema: GraphSchema,
    rng: np.random.Generator,
    edge_prob: float = 0.3,
    ghost_prob: float = 0.2,
    ghost_consistent: bool = True,
    n_nodes: Optional[int] = None,
) -> GraphOneHot:
    """
    Unstructured random labeled graph, used for property tests and sampling checks.
    Ghost nodes get no edges when `ghost_consistent` is set.
    """
    n = schema.max_nodes if n_nodes is None else n_nodes
    labels = rng.integers(1, schema.node_types + 1, size=n)
    labels[rng.random(n) < ghost_prob] = 0
    edge_labels = np.zeros((schema.max_nodes, schema.max_nodes), dtype=np.int64)
    for i in range(n):
        for j in range(i + 1, n):
            if ghost_consistent and (labels[i] == 0 or labels[j] == 0):
                continue
            if rng.random() < edge_prob:
                k = int(rng.integers(1, schema.edge_types + 1))
                edge_labels[i, j] = edge_labels[j, i] = k
    padded = np.zeros(schema.max_nodes, dtype=np.int64)
    padded[:n] = labels
    return GraphOneHot.from_label_arrays(schema, padded, edge_labels)
