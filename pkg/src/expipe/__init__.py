"""Batch experiment pipeline: generate, execute, aggregate, plot, compare."""

__version__ = "0.1.0"
