"""Hybrid spatial-temporal entropy model video codec."""

__version__ = "0.1.0"
