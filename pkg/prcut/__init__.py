"""Probabilistic ratio-cut clustering toolkit."""

__version__ = "0.1.0"
