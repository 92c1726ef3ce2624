"""Multivariate space-time causal discovery on gridded data."""

__version__ = "0.1.0"
