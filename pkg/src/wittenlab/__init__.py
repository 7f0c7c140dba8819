"""Numerical laboratory for the Witten Laplacian heat flow on model manifolds."""

__version__ = "0.1.0"
