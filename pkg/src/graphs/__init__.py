"""Graph representations, likelihood, canonical forms and file formats"""

from .canonical import MatchStats, canonical_form, exact_form, graph_key, is_isomorphic
from .io import deserialize, read_dataset, serialize, to_dot, write_dataset
from .model import (
    GraphBatch,
    GraphOneHot,
    GraphProb,
    argmax_decode,
    argmax_decode_batch,
    log_likelihood,
    relax,
    sample,
)

__all__ = [
    "GraphBatch",
    "GraphOneHot",
    "GraphProb",
    "MatchStats",
    "argmax_decode",
    "argmax_decode_batch",
    "canonical_form",
    "deserialize",
    "exact_form",
    "graph_key",
    "is_isomorphic",
    "log_likelihood",
    "read_dataset",
    "relax",
    "sample",
    "serialize",
    "to_dot",
    "write_dataset",
]
