"""Numerical toolkit for c-projective structures of Kähler metrics."""

__version__ = "0.1.0"
