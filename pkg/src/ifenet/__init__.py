"""Iterative feature exclusion ranking and the IFENet tabular classifier."""

__version__ = "0.1.0"
