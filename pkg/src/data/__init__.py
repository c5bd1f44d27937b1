"""Synthetic dataset generators"""

from .datagen import (
    corrupt_with_incompatible_edges,
    gen_node_compatible,
    gen_toy_molecules,
    split_dataset,
)

__all__ = [
    "corrupt_with_incompatible_edges",
    "gen_node_compatible",
    "gen_toy_molecules",
    "split_dataset",
]
