"""Residual transform, quantization and entropy coding toolkit."""

__version__ = "0.1.0"
