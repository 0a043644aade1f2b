"""Finite-volume free energy densities of one-dimensional quantum spin chains."""

__version__ = "0.1.0"
