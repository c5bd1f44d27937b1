"""Validity constraints: differentiable penalties and exact oracles"""

from .oracles import (
    ValenceReport,
    check_compatibility,
    check_connectivity,
    check_valence,
    incompatible_edges,
    is_valid,
)
from .penalties import (
    compatibility_constraints,
    compatibility_penalty,
    connectivity_penalty,
    generic_valence,
    molecular_constraints,
    regularizer_terms,
    total_regularizer,
    valence_penalty,
)

__all__ = [
    "ValenceReport",
    "check_compatibility",
    "check_connectivity",
    "check_valence",
    "compatibility_constraints",
    "compatibility_penalty",
    "connectivity_penalty",
    "generic_valence",
    "incompatible_edges",
    "is_valid",
    "molecular_constraints",
    "regularizer_terms",
    "total_regularizer",
    "valence_penalty",
]
