"""Robust satisficing with conic evaluation functions."""

__version__ = "0.1.0"
