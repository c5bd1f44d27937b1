"""Permutation-canonical byte form of labeled graphs.

Nodes are coloured by label and the colouring is refined until stable (each
round a node's colour becomes its old colour plus the sorted multiset of
(edge type, neighbour colour) pairs, ranked so that colours never depend on
node order). Remaining ties are resolved by individualizing every node of the
first non-singleton cell in turn, refining again and recursing; the smallest
encoding over all discrete leaves is the canonical form.

Ghost nodes without edges do not take part, so the form does not depend on
how many padding slots a graph has or where they sit.
"""

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.core.errors import CanonicalizationError

from .model import GraphOneHot

logger = logging.getLogger(__name__)

DEFAULT_CELL_BOUND = 8


def _participants(g: GraphOneHot) -> list[int]:
    labels = g.node_labels()
    edge_labels = g.edge_labels()
    return [
        i for i in range(g.max_nodes)
        if labels[i] != 0 or edge_labels[i].any()
    ]


def _rank(signatures: list) -> list[int]:
    order = {sig: rank for rank, sig in enumerate(sorted(set(signatures)))}
    return [order[sig] for sig in signatures]


def _refine(colors: list[int], adjacency: list[list[tuple[int, int]]]) -> list[int]:
    """Colour refinement to the coarsest stable partition finer than `colors`"""
    count = len(set(colors))
    while True:
        signatures = [
            (colors[v], tuple(sorted((k, colors[u]) for u, k in adjacency[v])))
            for v in range(len(colors))
        ]
        refined = _rank(signatures)
        new_count = len(set(refined))
        colors = refined
        if new_count == count:
            return colors
        count = new_count


def _encode(order: list[int], labels: list[int], edge_labels: np.ndarray) -> bytes:
    n = len(order)
    out = bytearray([n])
    out.extend(labels[v] for v in order)
    for a in range(n):
        for b in range(a + 1, n):
            out.append(int(edge_labels[order[a], order[b]]))
    return bytes(out)


def _cells(colors: list[int]) -> dict[int, list[int]]:
    cells: dict[int, list[int]] = defaultdict(list)
    for v, c in enumerate(colors):
        cells[c].append(v)
    return cells


def _twins(u: int, v: int, edge_labels: np.ndarray) -> bool:
    mask = np.ones(edge_labels.shape[0], dtype=bool)
    mask[[u, v]] = False
    return np.array_equal(edge_labels[u][mask], edge_labels[v][mask])


def _search(
    colors: list[int],
    adjacency: list[list[tuple[int, int]]],
    labels: list[int],
    edge_labels: np.ndarray,
    best: Optional[bytes],
) -> Optional[bytes]:
    cells = _cells(colors)
    target = next((cells[c] for c in sorted(cells) if len(cells[c]) > 1), None)
    if target is None:
        order = sorted(range(len(colors)), key=lambda v: colors[v])
        code = _encode(order, labels, edge_labels)
        return code if best is None or code < best else best
    branched: list[int] = []
    for v in target:
        # swapping twins is an automorphism, so their subtrees coincide
        if any(_twins(v, w, edge_labels) for w in branched):
            continue
        branched.append(v)
        split = [(c, 0 if u == v else 1) for u, c in enumerate(colors)]
        best = _search(_refine(_rank(split), adjacency), adjacency, labels, edge_labels, best)
    return best


def canonical_form(g: GraphOneHot, cell_bound: int = DEFAULT_CELL_BOUND) -> bytes:
    """
    Byte string equal for two graphs iff they are isomorphic under a node
    permutation that preserves node and edge labels.

    Args:
        g: Graph to canonicalize
        cell_bound: Largest colour class allowed after refinement

    Raises:
        CanonicalizationError: If a stable colour class exceeds cell_bound
    """
    nodes = _participants(g)
    all_labels = g.node_labels()
    all_edges = g.edge_labels()
    labels = [int(all_labels[v]) for v in nodes]
    edge_labels = all_edges[np.ix_(nodes, nodes)]
    adjacency = [
        [(u, int(edge_labels[v, u])) for u in range(len(nodes)) if edge_labels[v, u]]
        for v in range(len(nodes))
    ]

    colors = _refine(_rank(labels), adjacency)
    largest = max((len(cell) for cell in _cells(colors).values()), default=0)
    if largest > cell_bound:
        raise CanonicalizationError(
            f"canonicalization too expensive: colour class of {largest} nodes exceeds bound {cell_bound}"
        )
    code = _search(colors, adjacency, labels, edge_labels, None)
    return code if code is not None else bytes([0])


def exact_form(g: GraphOneHot) -> bytes:
    """Raw tensor bytes: equality means identical node order"""
    return g.F.tobytes() + g.E.tobytes()


@dataclass
class MatchStats:
    """How many graph keys had to fall back to exact matching"""
    fallbacks: int = 0


def graph_key(
    g: GraphOneHot,
    match: str = "canonical",
    cell_bound: int = DEFAULT_CELL_BOUND,
    stats: Optional[MatchStats] = None,
) -> bytes:
    """
    Key used for novelty/reconstruction matching. Canonical matching falls
    back to the exact form (with a warning, counted in `stats`) when
    canonicalization is too expensive.
    """
    if match == "exact":
        return b"x" + exact_form(g)
    try:
        return b"c" + canonical_form(g, cell_bound=cell_bound)
    except CanonicalizationError as exc:
        if stats is not None:
            stats.fallbacks += 1
        logger.warning("%s; using exact matching for this graph", exc)
        return b"x" + exact_form(g)


def is_isomorphic(a: GraphOneHot, b: GraphOneHot, cell_bound: int = DEFAULT_CELL_BOUND) -> bool:
    return canonical_form(a, cell_bound) == canonical_form(b, cell_bound)
