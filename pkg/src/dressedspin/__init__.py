"""Dressed spin qubit simulation and analysis."""

__version__ = "0.1.0"
