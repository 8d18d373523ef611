"""Nonclassicality certification toolkit for the triangle causal network."""

__version__ = "0.1.0"
