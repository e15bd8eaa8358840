"""Learned augmentation and disruption-prediction benchmarking for
multivariate tokamak discharge series."""

__version__ = "0.1.0"
