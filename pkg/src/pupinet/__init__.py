"""Bidirectional OCT/OCTA volume translation toolkit."""

__version__ = "0.1.0"
