"""Differentiable validity penalties on probabilistic graphs.

Each penalty returns values g with the convention g <= 0 when the constraint
holds. They are built from tape primitives, so the regularizer
sum_family mu_family * sum_constraints g+ back-propagates into the decoder.
All functions accept a batch: leading axes of the GraphProb are carried
through unchanged.
"""

import logging
from typing import Optional, Sequence

import numpy as np

from src.core.errors import ConfigError
from src.core.models import ConstraintSpec, GraphSchema, RegularizationConfig
from src.core.tensor import Node, ramp, reduce_mean, sigmoid, sqrt, square, swapaxes
from src.graphs.model import GraphProb

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# ConstraintSpec presets
# ---------------------------------------------------------------------------

def generic_valence(schema: GraphSchema) -> tuple[list[float], list[float]]:
    """
    Capacities for graphs without chemistry: every edge costs 1 and every
    real node may hold N-1 edges, so only ghosts can violate.
    """
    h = [0.0] + [1.0] * schema.edge_types
    u = [0.0] + [float(schema.max_nodes - 1)] * schema.node_types
    return h, u


def compatibility_constraints(
    schema: GraphSchema,
    compatibility: Sequence[Sequence[int]],
    alpha: float = 0.25,
    sharpness: float = 100.0,
) -> ConstraintSpec:
    """
    Node-compatible task: generic valence plus compatibility matrix D.

    Args:
        compatibility: d x d matrix over real node types, or the full
                       (1+d) x (1+d) matrix including the ghost row/column
    """
    D = np.asarray(compatibility, dtype=np.int64)
    if D.shape == (schema.node_types, schema.node_types):
        D = np.pad(D, ((1, 0), (1, 0)))
    h, u = generic_valence(schema)
    spec = ConstraintSpec(
        edge_capacity=h,
        node_capacity=u,
        compatibility=D.tolist(),
        alpha=alpha,
        sharpness=sharpness,
    )
    spec.check_schema(schema)
    return spec


def molecular_constraints(
    schema: GraphSchema,
    valences: Sequence[float],
    bond_capacities: Sequence[float],
    alpha: float = 0.25,
    sharpness: float = 100.0,
) -> ConstraintSpec:
    """Molecule task: bond capacities h(k) and atom valences u(r)"""
    spec = ConstraintSpec(
        edge_capacity=[0.0] + [float(c) for c in bond_capacities],
        node_capacity=[0.0] + [float(v) for v in valences],
        compatibility=None,
        alpha=alpha,
        sharpness=sharpness,
    )
    spec.check_schema(schema)
    return spec


# ---------------------------------------------------------------------------
# Penalties
# ---------------------------------------------------------------------------

def _off_diagonal(n: int) -> np.ndarray:
    return 1.0 - np.eye(n)


def valence_penalty(m: GraphProb, spec: ConstraintSpec) -> Node:
    """
    g_i = V(i) - U(i) with expected capacity V(i) = sum_{j!=i} sum_k h(k) E~(i,j,k)
    and expected bound U(i) = sum_r u(r) F~(i,r). Shape (..., N).
    """
    n = m.max_nodes
    edge_capacity = (m.E * spec.h).sum(axis=-1)
    V = (edge_capacity * _off_diagonal(n)).sum(axis=-1)
    U = (m.F * spec.u).sum(axis=-1)
    return V - U


def connectivity_penalty(m: GraphProb, spec: ConstraintSpec) -> Node:
    """
    Soft reachability: with A(i,j) = 1 - E~(i,j,0), A_0 = I, A_1 = A and
    A_{k+1} = s(A_k A) up to A_{N-1}, B = sum_k A_k, C = s(B), where
    s(x) = 1 / (1 + exp(-a (x - 1/2))). With q(i) = 1 - F~(i,0):

        g_ij = q(i) q(j) (1 - C(i,j)) + (1 - q(i) q(j)) C(i,j)

    Shape (..., N, N), symmetric, zero diagonal.
    """
    n = m.max_nodes
    a = spec.sharpness
    q = 1.0 - m.F[..., 0]
    A = 1.0 - m.E[..., 0]
    B = A * 0.0 + np.eye(n)
    if n > 1:
        power = A
        B = B + power
        for _ in range(n - 2):
            power = sigmoid(power @ A, sharpness=a, center=0.5)
            B = B + power
    C = sigmoid(B, sharpness=a, center=0.5)
    both = q[..., :, None] * q[..., None, :]
    g = both * (1.0 - C) + (1.0 - both) * C
    return g * _off_diagonal(n)


def compatibility_penalty(m: GraphProb, spec: ConstraintSpec) -> Node:
    """
    g_ij = [1 - E~(i,j,0)] [1 - P(i,j)] - alpha with P = F~ D F~^T.
    Shape (..., N, N), symmetric, zero diagonal.

    Raises:
        ConfigError: If `spec` has no compatibility matrix
    """
    if spec.D is None:
        raise ConfigError("compatibility penalty needs a compatibility matrix")
    n = m.max_nodes
    P = (m.F @ spec.D) @ swapaxes(m.F, -1, -2)
    exists = 1.0 - m.E[..., 0]
    g = exists * (1.0 - P) - spec.alpha
    return g * _off_diagonal(n)


_PENALTIES = {
    "valence": valence_penalty,
    "connectivity": connectivity_penalty,
    "compatibility": compatibility_penalty,
}


def ramped_violations(m: GraphProb, spec: ConstraintSpec, family: str) -> Node:
    """
    g+ for every individual constraint of a family: (..., N) for valence,
    (..., N, N) for pair families with everything but i<j zeroed.
    """
    g = ramp(_PENALTIES[family](m, spec))
    if family == "valence":
        return g
    return g * np.triu(np.ones((m.max_nodes, m.max_nodes)), k=1)


def _constraint_axes(family: str) -> tuple:
    return (-1,) if family == "valence" else (-2, -1)


def regularizer_terms(
    m: GraphProb,
    spec: ConstraintSpec,
    reg: RegularizationConfig,
) -> dict[str, Node]:
    """
    Unweighted penalty per enabled family, reduced over the batch.

    ramp form: mean over batch elements of sum_constraints g+.
    rms form: the leading axes are Monte-Carlo samples and each constraint
    contributes sqrt(mean_samples g+^2).

    Raises:
        ConfigError: If no family is enabled
    """
    if not reg.families:
        raise ConfigError("no constraint family enabled")
    terms: dict[str, Node] = {}
    for family in reg.families:
        violations = ramped_violations(m, spec, family)
        axes = _constraint_axes(family)
        batch_axes = tuple(range(len(m.batch_shape)))
        if reg.penalty_form == "rms" and batch_axes:
            terms[family] = sqrt(reduce_mean(square(violations), axis=batch_axes)).sum()
        else:
            per_graph = violations.sum(axis=axes)
            terms[family] = per_graph.mean() if batch_axes else per_graph
    return terms


def total_regularizer(
    m: GraphProb,
    spec: ConstraintSpec,
    reg: RegularizationConfig,
    terms: Optional[dict[str, Node]] = None,
) -> Node:
    """sum over families of mu_family times the family's ramped penalty"""
    terms = terms if terms is not None else regularizer_terms(m, spec, reg)
    total: Optional[Node] = None
    for family, value in terms.items():
        weighted = value * reg.weight(family)
        total = weighted if total is None else total + weighted
    return total
