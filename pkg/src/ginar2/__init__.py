"""Simulation and tail verification for second-order Galton-Watson processes with immigration."""

__version__ = "0.1.0"
