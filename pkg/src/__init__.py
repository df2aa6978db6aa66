"""Numerics for identical-token timing channels."""

__version__ = "0.1.0"
