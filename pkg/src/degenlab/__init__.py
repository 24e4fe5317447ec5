"""Numerical laboratory for quadratic endomorphisms of C^2 degenerating to a Henon map."""

__version__ = "0.1.0"
