"""Explainable static silent-store prediction toolkit."""

__version__ = "0.1.0"
