"""Spectral solvers for plane-like minimizers on periodic cells."""

__version__ = "0.1.0"
