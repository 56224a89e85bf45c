"""Reconstruct everyday-activity episodes from personal digital traces."""

__version__ = "0.1.0"
