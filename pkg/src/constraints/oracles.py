"""Exact validity checks on discrete graphs.

These are the ground truth the soft penalties approximate: on a one-hot graph
the valence and compatibility penalties coincide with the counts computed
here, and the connectivity penalty is <= 0 everywhere iff the non-ghost nodes
form one connected component.
"""

import logging
from dataclasses import dataclass

import networkx as nx
import numpy as np

from src.core.models import ConstraintSpec, Task
from src.graphs.model import GraphOneHot

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ValenceReport:
    """
    Attributes:
        load: Capacity used at each node, sum of h over incident edges
        bound: Capacity bound of each node's type (0 for ghosts)
        violation: load - bound per node
    """
    load: np.ndarray
    bound: np.ndarray

    @property
    def violation(self) -> np.ndarray:
        return self.load - self.bound

    @property
    def per_node(self) -> np.ndarray:
        return self.violation <= 0

    @property
    def ok(self) -> bool:
        return bool(self.per_node.all())


def check_valence(g: GraphOneHot, spec: ConstraintSpec) -> ValenceReport:
    h, u = spec.h, spec.u
    edge_labels = g.edge_labels()
    load = h[edge_labels].sum(axis=1) - h[np.diagonal(edge_labels)]
    bound = u[g.node_labels()]
    return ValenceReport(load=load, bound=bound)


def to_networkx(g: GraphOneHot) -> nx.Graph:
    """Non-ghost nodes with `label` attributes, edges with `type`"""
    labels = g.node_labels()
    graph = nx.Graph()
    for i in g.active_nodes():
        graph.add_node(i, label=int(labels[i]))
    for i, j, k in g.edges():
        graph.add_edge(i, j, type=k)
    return graph


def check_connectivity(g: GraphOneHot) -> bool:
    """
    True iff the non-ghost nodes form one connected component. Edges touching
    ghosts count as broken (ghosts must be isolated). The empty graph is
    considered connected here; whether it is valid is decided by is_valid().
    """
    ghosts = set(range(g.max_nodes)) - set(g.active_nodes())
    if any(i in ghosts or j in ghosts for i, j, _ in g.edges()):
        return False
    graph = to_networkx(g)
    return graph.number_of_nodes() == 0 or nx.is_connected(graph)


def incompatible_edges(g: GraphOneHot, spec: ConstraintSpec) -> list[tuple[int, int]]:
    """Edges (i < j) whose endpoint types are not allowed together by D"""
    D = spec.D
    if D is None:
        return []
    labels = g.node_labels()
    return [(i, j) for i, j, _ in g.edges() if D[labels[i], labels[j]] == 0]


def check_compatibility(g: GraphOneHot, spec: ConstraintSpec) -> bool:
    return not incompatible_edges(g, spec)


def is_valid(
    g: GraphOneHot,
    spec: ConstraintSpec,
    task: Task,
    empty_valid: bool = False,
) -> bool:
    """
    Task validity: molecule graphs must respect valences and be connected,
    node-compatible graphs must respect valences and D.

    A graph with no nodes at all is a valid (vacuous) compatibility graph;
    as a molecule it only counts when `empty_valid` is set.
    """
    task = Task(task)
    if not check_valence(g, spec).ok:
        return False
    if task == Task.MOLECULE:
        if not g.active_nodes():
            return empty_valid
        return check_connectivity(g)
    return check_compatibility(g, spec)
