"""Evaluation metrics and exports"""

from .export import export_walk, write_report
from .metrics import (
    denoise_eval,
    evaluate,
    latent_walk,
    mean_elbo,
    percent_novel,
    percent_recon,
    percent_valid,
)

__all__ = [
    "denoise_eval",
    "evaluate",
    "export_walk",
    "latent_walk",
    "mean_elbo",
    "percent_novel",
    "percent_recon",
    "percent_valid",
    "write_report",
]
