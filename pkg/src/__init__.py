"""Regularized Graph VAE - semantically valid graph generation"""

__version__ = "0.1.0"
