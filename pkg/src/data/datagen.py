"""Synthetic graph datasets.

- node-compatible graphs: random labels, edges only between compatible types
- toy molecules: connected graphs grown atom by atom within valence limits
- denoising sets: valid graphs with extra edges between incompatible types

Each graph is drawn from its own child generator (`rng.spawn`), so graph i of
a dataset depends only on the parent seed and i.
"""

import logging
from typing import Optional, Sequence, Union

import numpy as np

from src.core.errors import GenerationError
from src.core.models import GraphSchema
from src.graphs.model import GraphOneHot

logger = logging.getLogger(__name__)

InsertionCount = Union[int, tuple[int, int]]


def _full_compatibility(schema: GraphSchema, compatibility: Sequence[Sequence[int]]) -> np.ndarray:
    D = np.asarray(compatibility, dtype=np.int64)
    if D.shape == (schema.node_types, schema.node_types):
        D = np.pad(D, ((1, 0), (1, 0)))
    if D.shape != (schema.node_width, schema.node_width):
        raise GenerationError(f"compatibility matrix of shape {D.shape} does not fit {schema.node_types} node types")
    return D


def _node_range(schema: GraphSchema, node_range: tuple[int, int], minimum: int = 0) -> tuple[int, int]:
    lo, hi = node_range
    if lo > hi or hi < minimum:
        raise GenerationError(f"invalid node range {node_range}")
    if lo > schema.max_nodes:
        raise GenerationError(f"node range {node_range} exceeds max_nodes={schema.max_nodes}")
    return max(lo, minimum), min(hi, schema.max_nodes)


def gen_node_compatible(
    count: int,
    schema: GraphSchema,
    compatibility: Sequence[Sequence[int]],
    rng: np.random.Generator,
    edge_prob: float = 0.4,
    node_range: tuple[int, int] = (10, 15),
) -> list[GraphOneHot]:
    """
    Node-compatible benchmark graphs: n uniform in node_range, labels uniform
    over 1..d, every compatible pair joined with probability edge_prob (edge
    type 1). No connectivity post-processing.
    """
    D = _full_compatibility(schema, compatibility)
    lo, hi = _node_range(schema, node_range)
    graphs = []
    for child in rng.spawn(count):
        n = int(child.integers(lo, hi + 1))
        labels = child.integers(1, schema.node_types + 1, size=n)
        coins = child.random((n, n))
        edges = [
            (i, j, 1)
            for i in range(n)
            for j in range(i + 1, n)
            if D[labels[i], labels[j]] and coins[i, j] < edge_prob
        ]
        graphs.append(GraphOneHot.from_labels(schema, labels.tolist(), edges))
    logger.debug("generated %d node-compatible graphs", len(graphs))
    return graphs


def _grow_molecule(
    schema: GraphSchema,
    valences: np.ndarray,
    capacities: np.ndarray,
    size: int,
    ring_closure_prob: float,
    rng: np.random.Generator,
) -> GraphOneHot:
    types = np.arange(1, len(valences) + 1)
    smallest = capacities.min()
    bondable = types[valences >= smallest]

    start_pool = bondable if size > 1 and len(bondable) else types
    labels = [int(rng.choice(start_pool))]
    residual = [float(valences[labels[0] - 1])]
    bonds: dict[tuple[int, int], int] = {}

    def fitting_bonds(limit: float) -> np.ndarray:
        return np.nonzero(capacities <= limit)[0] + 1

    while True:
        closable = [
            (i, j)
            for i in range(len(labels))
            for j in range(i + 1, len(labels))
            if (i, j) not in bonds and min(residual[i], residual[j]) >= smallest
        ]
        if closable and rng.random() < ring_closure_prob:
            i, j = closable[int(rng.integers(len(closable)))]
            k = int(rng.choice(fitting_bonds(min(residual[i], residual[j]))))
        elif len(labels) < size:
            hosts = [i for i in range(len(labels)) if residual[i] >= smallest]
            if not hosts or not len(bondable):
                break
            i = hosts[int(rng.integers(len(hosts)))]
            new_type = int(rng.choice(bondable))
            j = len(labels)
            labels.append(new_type)
            residual.append(float(valences[new_type - 1]))
            k = int(rng.choice(fitting_bonds(min(residual[i], residual[j]))))
        else:
            break
        bonds[(i, j)] = k
        residual[i] -= capacities[k - 1]
        residual[j] -= capacities[k - 1]

    edges = [(i, j, k) for (i, j), k in bonds.items()]
    return GraphOneHot.from_labels(schema, labels, edges)


def gen_toy_molecules(
    count: int,
    schema: GraphSchema,
    valences: Sequence[float],
    bond_capacities: Sequence[float],
    rng: np.random.Generator,
    node_range: Optional[tuple[int, int]] = None,
    ring_closure_prob: float = 0.2,
) -> list[GraphOneHot]:
    """
    Connected, valence-respecting graphs built by sequential growth.

    Start from one atom and repeat: with probability ring_closure_prob join
    two existing atoms whose residual valences both fit some bond, otherwise
    attach a new atom to a random atom with spare valence. The bond type is
    uniform among the bonds that fit both endpoints. Growth stops at a size
    drawn uniformly from node_range (default 1..N) or when nothing fits.

    Raises:
        GenerationError: If no atom type can hold any bond, or the tables do
                         not match the schema
    """
    valences = np.asarray(valences, dtype=np.float64)
    capacities = np.asarray(bond_capacities, dtype=np.float64)
    if len(valences) != schema.node_types or len(capacities) != schema.edge_types:
        raise GenerationError(
            f"{len(valences)} valences / {len(capacities)} bond capacities do not match "
            f"{schema.node_types} node types / {schema.edge_types} edge types"
        )
    if (capacities <= 0).any():
        raise GenerationError("bond capacities must be positive")
    if valences.max() < capacities.min():
        raise GenerationError("valence table is unattainable: no atom type can hold a bond")
    lo, hi = _node_range(schema, node_range or (1, schema.max_nodes), minimum=1)

    graphs = []
    for child in rng.spawn(count):
        size = int(child.integers(lo, hi + 1))
        graphs.append(_grow_molecule(schema, valences, capacities, size, ring_closure_prob, child))
    logger.debug("generated %d toy molecules", len(graphs))
    return graphs


def corrupt_with_incompatible_edges(
    dataset: Sequence[GraphOneHot],
    compatibility: Sequence[Sequence[int]],
    per_graph_insertions: InsertionCount,
    rng: np.random.Generator,
    edge_type: int = 1,
) -> list[GraphOneHot]:
    """
    Insert k edges per graph between currently unconnected node pairs whose
    types are incompatible, drawn uniformly without replacement. k is fixed
    or uniform over an inclusive range; graphs with fewer such pairs get all
    of them.
    """
    if isinstance(per_graph_insertions, int):
        lo = hi = per_graph_insertions
    else:
        lo, hi = per_graph_insertions
    if lo < 0 or hi < lo:
        raise GenerationError(f"invalid insertion count {per_graph_insertions}")

    corrupted = []
    for g, child in zip(dataset, rng.spawn(len(dataset))):
        D = _full_compatibility(g.schema, compatibility)
        k = int(child.integers(lo, hi + 1))
        labels = g.node_labels()
        edge_labels = g.edge_labels()
        active = g.active_nodes()
        candidates = [
            (i, j)
            for a, i in enumerate(active)
            for j in active[a + 1:]
            if edge_labels[i, j] == 0 and D[labels[i], labels[j]] == 0
        ]
        k = min(k, len(candidates))
        if k == 0:
            corrupted.append(g)
            continue
        chosen = child.choice(len(candidates), size=k, replace=False)
        for index in sorted(int(c) for c in chosen):
            i, j = candidates[index]
            edge_labels[i, j] = edge_labels[j, i] = edge_type
        corrupted.append(GraphOneHot.from_label_arrays(g.schema, labels, edge_labels))
    return corrupted


def split_dataset(
    graphs: Sequence[GraphOneHot],
    holdout: Union[int, float],
    rng: np.random.Generator,
) -> tuple[list[GraphOneHot], list[GraphOneHot]]:
    """
    Random (train, holdout) split. `holdout` is a count or, when below 1, a
    fraction of the dataset. Both parts keep the original relative order.
    """
    total = len(graphs)
    size = int(round(holdout * total)) if isinstance(holdout, float) and holdout < 1 else int(holdout)
    size = max(0, min(size, total))
    chosen = set(rng.permutation(total)[:size].tolist())
    train = [g for i, g in enumerate(graphs) if i not in chosen]
    held = [g for i, g in enumerate(graphs) if i in chosen]
    return train, held
