"""Shared test helpers: finite differences and small graph builders"""

from typing import Callable

import numpy as np

from src.core.models import GraphSchema
from src.core.tensor import Node, backward, leaf
from src.graphs.model import GraphOneHot


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function of one array"""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        plus, minus = x.copy(), x.copy()
        plus[index] += step
        minus[index] -= step
        grad[index] = (f(plus) - f(minus)) / (2 * step)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    scale = max(np.abs(a).max(), np.abs(b).max(), floor)
    return float(np.abs(a - b).max() / scale)


def check_gradient(
    build: Callable[[Node], Node],
    x: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Relative error between backward() and finite differences for build(leaf(x))"""
    node = leaf(x)
    analytic = backward(build(node))[node]
    numeric = numeric_gradient(lambda v: build(Node(v)).item(), x, step=step)
    return relative_error(analytic, numeric)


def path_graph(schema: GraphSchema, n: int, label: int = 1, edge_type: int = 1) -> GraphOneHot:
    return GraphOneHot.from_labels(schema, [label] * n, [(i, i + 1, edge_type) for i in range(n - 1)])


def triangle(schema: GraphSchema, label: int = 1) -> GraphOneHot:
    return GraphOneHot.from_labels(schema, [label] * 3, [(0, 1, 1), (1, 2, 1), (0, 2, 1)])


def hardwire_decoder(params, node_label: int, edge_label: int, strength: float = 30.0) -> None:
    """Make the decoder ignore z and emit one fixed graph: every slot gets
    node_label and every pair edge_label"""
    schema = params.schema
    last = params.decoder[-1]
    n, dw, tw = schema.max_nodes, schema.node_width, schema.edge_width
    node_logits = np.zeros((n, dw))
    node_logits[:, node_label] = strength
    pair_logits = np.zeros((schema.pair_count, tw))
    pair_logits[:, edge_label] = strength
    last.weight.value = np.zeros_like(last.weight.value)
    last.bias.value = np.concatenate([node_logits.reshape(-1), pair_logits.reshape(-1)])
