"""Gromov-hyperbolic model spaces, free group actions, boundaries and entropies."""

__version__ = "0.1.0"
