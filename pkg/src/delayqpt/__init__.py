"""Hamiltonian and unitary reconstruction from time-delayed measurement data."""

__version__ = "0.1.0"
