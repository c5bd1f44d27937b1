"""Variational autoencoder over labeled graphs"""

from .checkpoint import load_checkpoint, save_checkpoint
from .model import (
    LatentSample,
    LossTerms,
    VaeParams,
    build_params,
    decode,
    elbo,
    encode,
    kl_divergence,
    regularized_loss,
    reparameterize,
    sample_prior,
)

__all__ = [
    "LatentSample",
    "LossTerms",
    "VaeParams",
    "build_params",
    "decode",
    "elbo",
    "encode",
    "kl_divergence",
    "load_checkpoint",
    "regularized_loss",
    "reparameterize",
    "sample_prior",
    "save_checkpoint",
]
