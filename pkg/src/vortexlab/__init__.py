"""Numerical laboratory for self-dual abelian Higgs vortices and their concentration sets."""

__version__ = "0.1.0"
