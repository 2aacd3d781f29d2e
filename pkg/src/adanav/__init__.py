"""Entropy-adaptive trajectory lengths for tabular policy gradient, with spectral analysis tools."""

__version__ = "0.1.0"
